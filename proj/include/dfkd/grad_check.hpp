#pragma once

#include <functional>
#include <vector>

#include "dfkd/tape.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

// Scalar-valued function of the inputs, evaluated under a fresh tape.
using ScalarFn = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Compares tape gradients against central finite differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every
// requires_grad input. Returns the max over elements of
// |analytic - fd| / max(1e-6, |fd|).
//
// The function is probed twice at the base point first; a bitwise
// difference means the check is invalid and raises ContractError.
double grad_check(const ScalarFn& f, std::vector<Tensor>& inputs, double eps = 1e-3);

}  // namespace dfkd
