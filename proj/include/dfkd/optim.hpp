#pragma once

#include <vector>

#include "dfkd/tensor.hpp"

namespace dfkd {

// Both optimizers read each parameter's grad buffer (a missing grad counts
// as zero) and keep per-parameter state keyed by tensor identity; state is
// reset whenever the parameter set changes.

// v <- momentum * v + g;  p <- p - lr * v
class SgdMomentum {
public:
    SgdMomentum(float lr, float momentum);
    void step(const std::vector<Tensor>& params);
    void reset() { velocity_.clear(); ids_.clear(); }

private:
    float lr_;
    float momentum_;
    std::vector<std::vector<float>> velocity_;
    std::vector<const void*> ids_;
};

// Bias-corrected adaptive update.
class Adam {
public:
    explicit Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);
    void step(const std::vector<Tensor>& params);
    void reset() { m_.clear(); v_.clear(); ids_.clear(); t_ = 0; }

private:
    float lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
    std::vector<const void*> ids_;
};

}  // namespace dfkd
