#pragma once

#include <vector>

#include "dfkd/tape.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd::ops {

// ---------------------------------------------------------------------------
// Elementwise ops with right-aligned broadcasting (extent 1 stretches).
// Pass tape=nullptr for pure inference (nothing is recorded and outputs do
// not require grad).
// ---------------------------------------------------------------------------

enum class EwKind { add, sub, mul, div, abs, exp, log, pow, clamp };

// Binary kinds take (a, b); unary kinds (abs, exp, log) ignore b.
// pow requires a scalar exponent; clamp is exposed as the named function.
Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, float b);

Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, float b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, float b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, float b);
Tensor div(Tape* tape, const Tensor& a, const Tensor& b);
Tensor div(Tape* tape, const Tensor& a, float b);
Tensor abs(Tape* tape, const Tensor& a);
Tensor exp(Tape* tape, const Tensor& a);
Tensor log(Tape* tape, const Tensor& a);
// a^p with scalar exponent; d/da at a=0 with p<1 uses subgradient 0.
Tensor pow(Tape* tape, const Tensor& a, float p);
// Gradient passes through on [lo, hi], zero outside.
Tensor clamp(Tape* tape, const Tensor& a, float lo, float hi);

// ---------------------------------------------------------------------------
// Reductions. Empty `axes` means all axes. var_biased divides by the element
// count (population variance, matching BatchNorm batch statistics).
// max is forward-only: its output never requires grad.
// ---------------------------------------------------------------------------

enum class Reduce { sum, mean, var_biased, max };

Tensor reduce(Tape* tape, Reduce kind, const Tensor& a, std::vector<int> axes,
              bool keep_dims);
Tensor sum_all(Tape* tape, const Tensor& a);
Tensor mean_all(Tape* tape, const Tensor& a);

// ---------------------------------------------------------------------------
// Linear algebra / NN ops.
// ---------------------------------------------------------------------------

// [M,K] x [K,N] -> [M,N]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

Tensor relu(Tape* tape, const Tensor& x);

// x [N,Cin,H,W], weight [Cout,Cin,kH,kW], bias [Cout] (optional, undefined ok).
// Cross-correlation with zero padding.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

// x [N,F], weight [K,F], bias [K] -> [N,K]
Tensor linear(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

// Gradient routes to the argmax (first index on ties).
Tensor maxpool2d(Tape* tape, const Tensor& x, int kernel, int stride);

// [N,C,H,W] -> [N,C,1,1]
Tensor global_avg_pool(Tape* tape, const Tensor& x);

// [N,...] -> [N, prod(rest)]
Tensor flatten(Tape* tape, const Tensor& x);

// Row-stabilized softmax of logits/temperature. temperature <= 0 is a config
// error. softmax(z, T) == softmax(z/T, 1) holds exactly.
Tensor softmax(Tape* tape, const Tensor& logits, float temperature);

// Mean over the batch of -log softmax(logits)[label].
Tensor cross_entropy_with_labels(Tape* tape, const Tensor& logits,
                                 const std::vector<int>& labels);

// Circular spatial shift by (dy, dx); a pure permutation, gradient flows.
Tensor jitter(Tape* tape, const Tensor& x, int dy, int dx);

// Anisotropic L1 total variation, summed over channels and valid neighbor
// pairs, averaged over the batch. abs subgradient 0 at 0.
Tensor tv_loss(Tape* tape, const Tensor& images);

// ---------------------------------------------------------------------------
// BatchNorm2d. Batch statistics (per-channel biased mean/variance over
// N,H,W) are always computed as differentiable graph nodes. Train mode
// normalizes with them and updates running stats in place
// (run <- (1-momentum)*run + momentum*batch); eval mode normalizes with the
// running stats and mutates nothing.
// ---------------------------------------------------------------------------

struct BnOut {
    Tensor out;
    Tensor batch_mean;  // [C]
    Tensor batch_var;   // [C], biased
};

BnOut batchnorm2d_forward(Tape* tape, const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, Tensor& running_mean,
                          Tensor& running_var, Tensor& num_batches,
                          bool train_mode, float momentum, float eps);

}  // namespace dfkd::ops
