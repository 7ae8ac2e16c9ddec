#include "dfkd/optim.hpp"

#include <cmath>

#include "dfkd/error.hpp"

namespace dfkd {

namespace {

bool same_params(const std::vector<const void*>& ids, const std::vector<Tensor>& params) {
    if (ids.size() != params.size()) return false;
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (ids[i] != params[i].id()) return false;
    return true;
}

}  // namespace

SgdMomentum::SgdMomentum(float lr, float momentum) : lr_(lr), momentum_(momentum) {
    if (!(lr > 0.0f)) throw ConfigError("sgd lr must be > 0");
    if (!(momentum >= 0.0f && momentum < 1.0f))
        throw ConfigError("sgd momentum must be in [0,1)");
}

void SgdMomentum::step(const std::vector<Tensor>& params) {
    if (!same_params(ids_, params)) {
        velocity_.clear();
        ids_.clear();
        for (const auto& p : params) {
            velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
            ids_.push_back(p.id());
        }
    }
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto& v = velocity_[pi];
        if (v.size() != static_cast<std::size_t>(p.numel()))
            throw ContractError("optimizer state shape mismatch");
        const float* g = p.grad();
        float* pdata = p.data();
        for (std::size_t i = 0; i < v.size(); ++i) {
            const float gi = g ? g[i] : 0.0f;
            v[i] = momentum_ * v[i] + gi;
            pdata[i] -= lr_ * v[i];
        }
    }
}

Adam::Adam(float lr, float beta1, float beta2, float eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    if (!(lr > 0.0f)) throw ConfigError("adam lr must be > 0");
    if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f))
        throw ConfigError("adam betas must be in [0,1)");
}

void Adam::step(const std::vector<Tensor>& params) {
    if (!same_params(ids_, params)) {
        m_.clear();
        v_.clear();
        ids_.clear();
        t_ = 0;
        for (const auto& p : params) {
            m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
            v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
            ids_.push_back(p.id());
        }
    }
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi];
        auto& m = m_[pi];
        auto& v = v_[pi];
        if (m.size() != static_cast<std::size_t>(p.numel()))
            throw ContractError("optimizer state shape mismatch");
        const float* g = p.grad();
        float* pdata = p.data();
        for (std::size_t i = 0; i < m.size(); ++i) {
            const float gi = g ? g[i] : 0.0f;
            m[i] = beta1_ * m[i] + (1.0f - beta1_) * gi;
            v[i] = beta2_ * v[i] + (1.0f - beta2_) * gi * gi;
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            pdata[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace dfkd
