#include "dfkd/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "dfkd/error.hpp"

namespace dfkd {

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    const auto n = shape_numel(shape);
    if (n < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<std::size_t>(n), 0.0f);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl_->data) v = value;
    return t;
}

Tensor Tensor::from_vector(Shape shape, std::vector<float> data, bool requires_grad) {
    const auto n = shape_numel(shape);
    if (n != static_cast<std::int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    t.impl_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_vector({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (auto& v : t.impl_->data) v = rng.normal();
    return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

int Tensor::dim() const { return static_cast<int>(impl_->shape.size()); }

float* Tensor::data() { return impl_->data.data(); }
const float* Tensor::data() const { return impl_->data.data(); }

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return defined() && !impl_->grad.empty(); }

float* Tensor::grad() { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
const float* Tensor::grad() const { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }

void Tensor::ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
}

void Tensor::zero_grad() {
    if (!impl_->grad.empty()) std::memset(impl_->grad.data(), 0, impl_->grad.size() * sizeof(float));
}

void Tensor::accumulate_grad(const float* g, std::int64_t n) {
    if (n != numel()) throw ContractError("gradient length does not match tensor");
    ensure_grad();
    float* dst = impl_->grad.data();
    for (std::int64_t i = 0; i < n; ++i) dst[i] += g[i];
}

float Tensor::item() const {
    if (!defined() || numel() != 1) throw ContractError("item() requires a scalar tensor");
    return impl_->data[0];
}

Tensor Tensor::deep_copy() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = false;
    return t;
}

void Tensor::check_finite(const char* what) const {
    for (const float v : impl_->data) {
        if (!std::isfinite(v))
            throw DomainError(std::string("non-finite value in ") + what);
    }
}

}  // namespace dfkd
