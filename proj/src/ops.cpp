#include <algorithm>
#include <cmath>
#include <cstring>

#include "dfkd/error.hpp"
#include "dfkd/gemm.hpp"
#include "dfkd/ops.hpp"

namespace dfkd::ops {

namespace {

struct BroadcastPlan {
    Shape out_shape;
    std::vector<std::int64_t> dims;       // out extents
    std::vector<std::int64_t> a_strides;  // 0 on stretched dims
    std::vector<std::int64_t> b_strides;
    std::int64_t numel = 0;
    bool same_shape = false;
};

std::vector<std::int64_t> row_major_strides(const Shape& shape) {
    std::vector<std::int64_t> strides(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        strides[i] = strides[i + 1] * shape[i + 1];
    return strides;
}

BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b) {
    BroadcastPlan plan;
    if (a == b) {
        plan.out_shape = a;
        plan.numel = shape_numel(a);
        plan.same_shape = true;
        return plan;
    }
    const int rank = static_cast<int>(std::max(a.size(), b.size()));
    plan.out_shape.resize(rank);
    for (int d = 0; d < rank; ++d) {
        const std::int64_t ea = d < rank - static_cast<int>(a.size())
                                    ? 1
                                    : a[d - (rank - a.size())];
        const std::int64_t eb = d < rank - static_cast<int>(b.size())
                                    ? 1
                                    : b[d - (rank - b.size())];
        if (ea != eb && ea != 1 && eb != 1)
            throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                             " are not broadcastable");
        plan.out_shape[d] = std::max(ea, eb);
    }
    plan.dims = plan.out_shape;
    plan.numel = shape_numel(plan.out_shape);

    auto strides_for = [&](const Shape& s) {
        std::vector<std::int64_t> full(rank, 0);
        const auto own = row_major_strides(s);
        const int off = rank - static_cast<int>(s.size());
        for (int d = 0; d < static_cast<int>(s.size()); ++d)
            full[off + d] = (s[d] == 1 && plan.out_shape[off + d] != 1) ? 0 : own[d];
        return full;
    };
    plan.a_strides = strides_for(a);
    plan.b_strides = strides_for(b);
    return plan;
}

// Walks the broadcast iteration space calling visit(out_idx, a_off, b_off).
template <typename F>
void broadcast_walk(const BroadcastPlan& plan, F&& visit) {
    const int rank = static_cast<int>(plan.dims.size());
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t a_off = 0, b_off = 0;
    for (std::int64_t lin = 0; lin < plan.numel; ++lin) {
        visit(lin, a_off, b_off);
        for (int d = rank - 1; d >= 0; --d) {
            ++idx[d];
            a_off += plan.a_strides[d];
            b_off += plan.b_strides[d];
            if (idx[d] < plan.dims[d]) break;
            a_off -= plan.a_strides[d] * plan.dims[d];
            b_off -= plan.b_strides[d] * plan.dims[d];
            idx[d] = 0;
        }
    }
}

// Sums an out-shaped gradient back onto an input's (possibly broadcast) shape.
std::vector<float> reduce_grad_to(const float* g, const BroadcastPlan& plan,
                                  const std::vector<std::int64_t>& in_strides,
                                  std::int64_t in_numel) {
    std::vector<float> acc(static_cast<std::size_t>(in_numel), 0.0f);
    const int rank = static_cast<int>(plan.dims.size());
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t off = 0;
    for (std::int64_t lin = 0; lin < plan.numel; ++lin) {
        acc[static_cast<std::size_t>(off)] += g[lin];
        for (int d = rank - 1; d >= 0; --d) {
            ++idx[d];
            off += in_strides[d];
            if (idx[d] < plan.dims[d]) break;
            off -= in_strides[d] * plan.dims[d];
            idx[d] = 0;
        }
    }
    return acc;
}

const char* kind_name(EwKind kind) {
    switch (kind) {
        case EwKind::add: return "add";
        case EwKind::sub: return "sub";
        case EwKind::mul: return "mul";
        case EwKind::div: return "div";
        case EwKind::abs: return "abs";
        case EwKind::exp: return "exp";
        case EwKind::log: return "log";
        case EwKind::pow: return "pow";
        case EwKind::clamp: return "clamp";
    }
    return "?";
}

bool is_unary(EwKind kind) {
    return kind == EwKind::abs || kind == EwKind::exp || kind == EwKind::log;
}

}  // namespace

Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, const Tensor& b) {
    if (kind == EwKind::clamp)
        throw ContractError("clamp requires the (a, lo, hi) overload");
    if (is_unary(kind)) {
        // unary: ignore b entirely
        const std::int64_t n = a.numel();
        Tensor out = Tensor::zeros(a.shape());
        const float* av = a.data();
        float* ov = out.data();
        switch (kind) {
            case EwKind::abs:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = std::fabs(av[i]);
                break;
            case EwKind::exp:
                for (std::int64_t i = 0; i < n; ++i) ov[i] = std::exp(av[i]);
                break;
            case EwKind::log:
                for (std::int64_t i = 0; i < n; ++i) {
                    if (av[i] <= 0.0f)
                        throw DomainError("log of non-positive operand (value " +
                                          std::to_string(av[i]) + ")");
                    ov[i] = std::log(av[i]);
                }
                break;
            default: break;
        }
        if (tape && a.requires_grad()) {
            out.set_requires_grad(true);
            Tensor ain = a, o = out;
            tape->record(out, [ain, o, kind]() mutable {
                const std::int64_t n = ain.numel();
                const float* g = o.grad();
                std::vector<float> ga(static_cast<std::size_t>(n));
                const float* av = ain.data();
                const float* ovv = o.data();
                for (std::int64_t i = 0; i < n; ++i) {
                    switch (kind) {
                        case EwKind::abs:
                            ga[i] = g[i] * (av[i] > 0.0f ? 1.0f : (av[i] < 0.0f ? -1.0f : 0.0f));
                            break;
                        case EwKind::exp: ga[i] = g[i] * ovv[i]; break;
                        case EwKind::log: ga[i] = g[i] / av[i]; break;
                        default: ga[i] = 0.0f; break;
                    }
                }
                ain.accumulate_grad(ga.data(), n);
            });
        }
        return out;
    }
    if (kind == EwKind::pow) {
        if (b.numel() != 1)
            throw ContractError("pow requires a scalar exponent");
        return pow(tape, a, b.data()[0]);
    }

    const BroadcastPlan plan = make_broadcast_plan(a.shape(), b.shape());
    Tensor out = Tensor::zeros(plan.out_shape);
    const float* av = a.data();
    const float* bv = b.data();
    float* ov = out.data();

    auto apply = [&](std::int64_t oi, std::int64_t ai, std::int64_t bi) {
        const float x = av[ai];
        const float y = bv[bi];
        switch (kind) {
            case EwKind::add: ov[oi] = x + y; break;
            case EwKind::sub: ov[oi] = x - y; break;
            case EwKind::mul: ov[oi] = x * y; break;
            case EwKind::div:
                if (y == 0.0f) throw DomainError("division by zero in div operand b");
                ov[oi] = x / y;
                break;
            default: break;
        }
    };
    if (plan.same_shape) {
        for (std::int64_t i = 0; i < plan.numel; ++i) apply(i, i, i);
    } else {
        broadcast_walk(plan, apply);
    }

    const bool needs_grad = tape && (a.requires_grad() || b.requires_grad());
    if (needs_grad) {
        out.set_requires_grad(true);
        Tensor ain = a, bin = b, o = out;
        tape->record(out, [ain, bin, o, kind, plan]() mutable {
            const float* g = o.grad();
            const std::int64_t n = plan.numel;
            auto backprop = [&](Tensor& t, bool is_a) {
                if (!t.requires_grad()) return;
                std::vector<float> partial(static_cast<std::size_t>(n));
                const float* av = ain.data();
                const float* bv = bin.data();
                auto fill = [&](std::int64_t oi, std::int64_t ai, std::int64_t bi) {
                    const float x = av[ai];
                    const float y = bv[bi];
                    float d = 0.0f;
                    switch (kind) {
                        case EwKind::add: d = 1.0f; break;
                        case EwKind::sub: d = is_a ? 1.0f : -1.0f; break;
                        case EwKind::mul: d = is_a ? y : x; break;
                        case EwKind::div: d = is_a ? 1.0f / y : -x / (y * y); break;
                        default: break;
                    }
                    partial[oi] = g[oi] * d;
                };
                if (plan.same_shape) {
                    for (std::int64_t i = 0; i < n; ++i) fill(i, i, i);
                    t.accumulate_grad(partial.data(), n);
                } else {
                    broadcast_walk(plan, fill);
                    const auto& strides = is_a ? plan.a_strides : plan.b_strides;
                    auto acc = reduce_grad_to(partial.data(), plan, strides, t.numel());
                    t.accumulate_grad(acc.data(), t.numel());
                }
            };
            backprop(ain, true);
            backprop(bin, false);
        });
    }
    return out;
}

Tensor elementwise(Tape* tape, EwKind kind, const Tensor& a, float b) {
    if (kind == EwKind::pow) return pow(tape, a, b);
    return elementwise(tape, kind, a, Tensor::scalar(b));
}

Tensor add(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::add, a, b); }
Tensor add(Tape* t, const Tensor& a, float b) { return elementwise(t, EwKind::add, a, b); }
Tensor sub(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::sub, a, b); }
Tensor sub(Tape* t, const Tensor& a, float b) { return elementwise(t, EwKind::sub, a, b); }
Tensor mul(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::mul, a, b); }
Tensor mul(Tape* t, const Tensor& a, float b) { return elementwise(t, EwKind::mul, a, b); }
Tensor div(Tape* t, const Tensor& a, const Tensor& b) { return elementwise(t, EwKind::div, a, b); }
Tensor div(Tape* t, const Tensor& a, float b) { return elementwise(t, EwKind::div, a, b); }
Tensor abs(Tape* t, const Tensor& a) { return elementwise(t, EwKind::abs, a, a); }
Tensor exp(Tape* t, const Tensor& a) { return elementwise(t, EwKind::exp, a, a); }
Tensor log(Tape* t, const Tensor& a) { return elementwise(t, EwKind::log, a, a); }

Tensor pow(Tape* tape, const Tensor& a, float p) {
    const std::int64_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    const float* av = a.data();
    float* ov = out.data();
    const bool integral_p = p == std::floor(p);
    for (std::int64_t i = 0; i < n; ++i) {
        if (av[i] < 0.0f && !integral_p)
            throw DomainError("pow of negative base with non-integer exponent");
        if (av[i] == 0.0f && p < 0.0f)
            throw DomainError("pow of zero base with negative exponent");
        ov[i] = std::pow(av[i], p);
    }
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor ain = a, o = out;
        tape->record(out, [ain, o, p]() mutable {
            const std::int64_t n = ain.numel();
            const float* g = o.grad();
            const float* av = ain.data();
            std::vector<float> ga(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) {
                if (av[i] == 0.0f && p < 1.0f)
                    ga[i] = 0.0f;  // subgradient at the kink
                else
                    ga[i] = g[i] * p * std::pow(av[i], p - 1.0f);
            }
            ain.accumulate_grad(ga.data(), n);
        });
    }
    return out;
}

Tensor clamp(Tape* tape, const Tensor& a, float lo, float hi) {
    if (lo > hi) throw ContractError("clamp lo > hi");
    const std::int64_t n = a.numel();
    Tensor out = Tensor::zeros(a.shape());
    const float* av = a.data();
    float* ov = out.data();
    for (std::int64_t i = 0; i < n; ++i) ov[i] = std::min(std::max(av[i], lo), hi);
    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor ain = a, o = out;
        tape->record(out, [ain, o, lo, hi]() mutable {
            const std::int64_t n = ain.numel();
            const float* g = o.grad();
            const float* av = ain.data();
            std::vector<float> ga(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i)
                ga[i] = (av[i] >= lo && av[i] <= hi) ? g[i] : 0.0f;
            ain.accumulate_grad(ga.data(), n);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

namespace {

struct ReducePlan {
    Shape out_shape;                       // honoring keep_dims
    std::vector<std::int64_t> out_index;   // per input dim: stride into output
    std::vector<std::int64_t> dims;        // input extents
    std::int64_t in_numel = 0;
    std::int64_t out_numel = 0;
    std::int64_t count = 0;                // elements folded per output
};

ReducePlan make_reduce_plan(const Shape& in, std::vector<int> axes, bool keep_dims) {
    const int rank = static_cast<int>(in.size());
    if (axes.empty())
        for (int d = 0; d < rank; ++d) axes.push_back(d);
    for (auto& ax : axes) {
        if (ax < 0) ax += rank;
        if (ax < 0 || ax >= rank) throw ShapeError("reduce axis out of range");
    }
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());

    std::vector<bool> reduced(rank, false);
    for (int ax : axes) reduced[ax] = true;

    ReducePlan plan;
    plan.dims = in;
    plan.in_numel = shape_numel(in);
    plan.count = 1;
    Shape kept;
    for (int d = 0; d < rank; ++d) {
        if (reduced[d]) {
            plan.count *= in[d];
            if (keep_dims) plan.out_shape.push_back(1);
        } else {
            plan.out_shape.push_back(in[d]);
            kept.push_back(in[d]);
        }
    }
    if (plan.count == 0) throw DomainError("reduction over an empty extent");
    plan.out_numel = shape_numel(plan.out_shape);

    // stride of each input dim in the (squeezed) output index space
    plan.out_index.assign(rank, 0);
    std::int64_t stride = 1;
    for (int d = rank - 1; d >= 0; --d) {
        if (!reduced[d]) {
            plan.out_index[d] = stride;
            stride *= in[d];
        }
    }
    return plan;
}

// Calls visit(in_linear, out_linear) over the whole input in linear order.
template <typename F>
void reduce_walk(const ReducePlan& plan, F&& visit) {
    const int rank = static_cast<int>(plan.dims.size());
    std::vector<std::int64_t> idx(rank, 0);
    std::int64_t out_off = 0;
    for (std::int64_t lin = 0; lin < plan.in_numel; ++lin) {
        visit(lin, out_off);
        for (int d = rank - 1; d >= 0; --d) {
            ++idx[d];
            out_off += plan.out_index[d];
            if (idx[d] < plan.dims[d]) break;
            out_off -= plan.out_index[d] * plan.dims[d];
            idx[d] = 0;
        }
    }
}

}  // namespace

Tensor reduce(Tape* tape, Reduce kind, const Tensor& a, std::vector<int> axes,
              bool keep_dims) {
    const ReducePlan plan = make_reduce_plan(a.shape(), std::move(axes), keep_dims);
    Tensor out = Tensor::zeros(plan.out_shape);
    const float* av = a.data();
    float* ov = out.data();
    const std::int64_t on = plan.out_numel;

    std::vector<double> acc(static_cast<std::size_t>(on), 0.0);
    std::vector<float> means;  // cached for var backward

    switch (kind) {
        case Reduce::sum:
        case Reduce::mean: {
            reduce_walk(plan, [&](std::int64_t i, std::int64_t o) { acc[o] += av[i]; });
            const double scale = kind == Reduce::mean ? 1.0 / static_cast<double>(plan.count) : 1.0;
            for (std::int64_t o = 0; o < on; ++o) ov[o] = static_cast<float>(acc[o] * scale);
            break;
        }
        case Reduce::var_biased: {
            reduce_walk(plan, [&](std::int64_t i, std::int64_t o) { acc[o] += av[i]; });
            means.resize(static_cast<std::size_t>(on));
            for (std::int64_t o = 0; o < on; ++o)
                means[o] = static_cast<float>(acc[o] / static_cast<double>(plan.count));
            std::fill(acc.begin(), acc.end(), 0.0);
            reduce_walk(plan, [&](std::int64_t i, std::int64_t o) {
                const double d = static_cast<double>(av[i]) - static_cast<double>(means[o]);
                acc[o] += d * d;
            });
            for (std::int64_t o = 0; o < on; ++o)
                ov[o] = static_cast<float>(acc[o] / static_cast<double>(plan.count));
            break;
        }
        case Reduce::max: {
            std::vector<bool> seen(static_cast<std::size_t>(on), false);
            reduce_walk(plan, [&](std::int64_t i, std::int64_t o) {
                if (!seen[o] || av[i] > ov[o]) {
                    ov[o] = av[i];
                    seen[o] = true;
                }
            });
            return out;  // forward-only
        }
    }

    if (tape && a.requires_grad()) {
        out.set_requires_grad(true);
        Tensor ain = a, o = out;
        tape->record(out, [ain, o, kind, plan, means = std::move(means)]() mutable {
            const float* g = o.grad();
            std::vector<float> ga(static_cast<std::size_t>(plan.in_numel));
            const float* av = ain.data();
            const float inv_count = 1.0f / static_cast<float>(plan.count);
            switch (kind) {
                case Reduce::sum:
                    reduce_walk(plan, [&](std::int64_t i, std::int64_t o) { ga[i] = g[o]; });
                    break;
                case Reduce::mean:
                    reduce_walk(plan,
                                [&](std::int64_t i, std::int64_t o) { ga[i] = g[o] * inv_count; });
                    break;
                case Reduce::var_biased:
                    reduce_walk(plan, [&](std::int64_t i, std::int64_t o) {
                        ga[i] = g[o] * 2.0f * (av[i] - means[o]) * inv_count;
                    });
                    break;
                case Reduce::max: break;
            }
            ain.accumulate_grad(ga.data(), plan.in_numel);
        });
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& a) { return reduce(tape, Reduce::sum, a, {}, false); }
Tensor mean_all(Tape* tape, const Tensor& a) { return reduce(tape, Reduce::mean, a, {}, false); }

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.dim() != 2 || b.dim() != 2)
        throw ShapeError("matmul expects 2-D operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    const std::int64_t m = a.shape()[0];
    const std::int64_t k = a.shape()[1];
    const std::int64_t n = b.shape()[1];
    if (b.shape()[0] != k)
        throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
    Tensor out = Tensor::zeros({m, n});
    gemm_nn(m, n, k, a.data(), b.data(), out.data(), false);

    if (tape && (a.requires_grad() || b.requires_grad())) {
        out.set_requires_grad(true);
        Tensor ain = a, bin = b, o = out;
        tape->record(out, [ain, bin, o, m, n, k]() mutable {
            const float* g = o.grad();
            if (ain.requires_grad()) {
                std::vector<float> da(static_cast<std::size_t>(m * k));
                gemm_nt(m, k, n, g, bin.data(), da.data(), false);
                ain.accumulate_grad(da.data(), m * k);
            }
            if (bin.requires_grad()) {
                std::vector<float> db(static_cast<std::size_t>(k * n));
                gemm_tn(m, n, k, ain.data(), g, db.data(), false);
                bin.accumulate_grad(db.data(), k * n);
            }
        });
    }
    return out;
}

}  // namespace dfkd::ops
