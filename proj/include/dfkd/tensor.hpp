#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "dfkd/rng.hpp"

namespace dfkd {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major f32 tensor with an optional gradient buffer.
// Copies are shallow handles onto a shared payload; ops produce fresh
// tensors, so a tensor's data is stable once its producing op returns.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_vector(Shape shape, std::vector<float> data, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    int dim() const;

    float* data();
    const float* data() const;

    bool requires_grad() const;
    void set_requires_grad(bool value);

    // grad() is nullptr until the first accumulation (or ensure_grad).
    bool has_grad() const;
    float* grad();
    const float* grad() const;
    void ensure_grad();
    void zero_grad();
    void accumulate_grad(const float* g, std::int64_t n);

    // Scalar value; ContractError when numel != 1.
    float item() const;

    Tensor deep_copy() const;

    // Stable identity of the underlying storage.
    const void* id() const { return impl_.get(); }

    // Throws DomainError naming `what` if any element is non-finite.
    void check_finite(const char* what) const;

private:
    struct Impl {
        Shape shape;
        std::vector<float> data;
        std::vector<float> grad;
        bool requires_grad = false;
    };

    std::shared_ptr<Impl> impl_;
};

}  // namespace dfkd
