#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "dfkd/error.hpp"
#include "dfkd/gemm.hpp"
#include "dfkd/ops.hpp"
#include "dfkd/threading.hpp"

namespace dfkd::ops {

Tensor relu(Tape* tape, const Tensor& x) {
    const std::int64_t n = x.numel();
    Tensor out = Tensor::zeros(x.shape());
    const float* xv = x.data();
    float* ov = out.data();
    for (std::int64_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        tape->record(out, [xin, o]() mutable {
            const std::int64_t n = xin.numel();
            const float* g = o.grad();
            const float* xv = xin.data();
            std::vector<float> gx(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) gx[i] = xv[i] > 0.0f ? g[i] : 0.0f;
            xin.accumulate_grad(gx.data(), n);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d: im2col + gemm. Column layout matches the weight's inner [Cin,kH,kW]
// order so the kernel matrix is the weight buffer viewed as [Cout, Cin*kH*kW].
// ---------------------------------------------------------------------------

namespace {

struct ConvDims {
    std::int64_t n, cin, h, w, cout, kh, kw, hout, wout, ckk, hw;
    int stride, padding;
};

ConvDims conv_dims(const Tensor& x, const Tensor& weight, int stride, int padding) {
    if (x.dim() != 4) throw ShapeError("conv2d input must be [N,C,H,W], got " + shape_str(x.shape()));
    if (weight.dim() != 4)
        throw ShapeError("conv2d weight must be [O,I,kH,kW], got " + shape_str(weight.shape()));
    if (stride < 1) throw ConfigError("conv2d stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d padding must be >= 0");
    ConvDims d;
    d.n = x.shape()[0];
    d.cin = x.shape()[1];
    d.h = x.shape()[2];
    d.w = x.shape()[3];
    d.cout = weight.shape()[0];
    d.kh = weight.shape()[2];
    d.kw = weight.shape()[3];
    if (weight.shape()[1] != d.cin)
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(d.cin) +
                         ", weight expects " + std::to_string(weight.shape()[1]));
    d.stride = stride;
    d.padding = padding;
    d.hout = (d.h + 2 * padding - d.kh) / stride + 1;
    d.wout = (d.w + 2 * padding - d.kw) / stride + 1;
    if (d.hout < 1 || d.wout < 1)
        throw ConfigError("conv2d output spatial dims are non-positive");
    d.ckk = d.cin * d.kh * d.kw;
    d.hw = d.hout * d.wout;
    return d;
}

void im2col(const ConvDims& d, const float* xn, float* cols) {
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.cin; ++ci) {
        const float* plane = xn + ci * d.h * d.w;
        for (std::int64_t r = 0; r < d.kh; ++r) {
            for (std::int64_t s = 0; s < d.kw; ++s, ++row) {
                float* dst = cols + row * d.hw;
                for (std::int64_t ho = 0; ho < d.hout; ++ho) {
                    const std::int64_t hi = ho * d.stride - d.padding + r;
                    float* drow = dst + ho * d.wout;
                    if (hi < 0 || hi >= d.h) {
                        std::memset(drow, 0, static_cast<std::size_t>(d.wout) * sizeof(float));
                        continue;
                    }
                    const float* srow = plane + hi * d.w;
                    for (std::int64_t wo = 0; wo < d.wout; ++wo) {
                        const std::int64_t wi = wo * d.stride - d.padding + s;
                        drow[wo] = (wi >= 0 && wi < d.w) ? srow[wi] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const ConvDims& d, const float* cols, float* xn) {
    std::int64_t row = 0;
    for (std::int64_t ci = 0; ci < d.cin; ++ci) {
        float* plane = xn + ci * d.h * d.w;
        for (std::int64_t r = 0; r < d.kh; ++r) {
            for (std::int64_t s = 0; s < d.kw; ++s, ++row) {
                const float* src = cols + row * d.hw;
                for (std::int64_t ho = 0; ho < d.hout; ++ho) {
                    const std::int64_t hi = ho * d.stride - d.padding + r;
                    if (hi < 0 || hi >= d.h) continue;
                    float* drow = plane + hi * d.w;
                    const float* srow = src + ho * d.wout;
                    for (std::int64_t wo = 0; wo < d.wout; ++wo) {
                        const std::int64_t wi = wo * d.stride - d.padding + s;
                        if (wi >= 0 && wi < d.w) drow[wi] += srow[wo];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
    const ConvDims d = conv_dims(x, weight, stride, padding);
    if (bias.defined() && (bias.dim() != 1 || bias.shape()[0] != d.cout))
        throw ShapeError("conv2d bias must be [Cout]");

    Tensor out = Tensor::zeros({d.n, d.cout, d.hout, d.wout});
    const bool want_w_grad = tape && weight.requires_grad();
    // cols are cached only when the weight gradient will need them
    auto cols_cache = want_w_grad
                          ? std::make_shared<std::vector<float>>(
                                static_cast<std::size_t>(d.n * d.ckk * d.hw))
                          : nullptr;

    const float* xv = x.data();
    const float* wv = weight.data();
    const float* bv = bias.defined() ? bias.data() : nullptr;
    float* ov = out.data();

    parallel_for(0, d.n, [&](std::int64_t n) {
        std::vector<float> local;
        float* cols;
        if (cols_cache) {
            cols = cols_cache->data() + n * d.ckk * d.hw;
        } else {
            local.resize(static_cast<std::size_t>(d.ckk * d.hw));
            cols = local.data();
        }
        im2col(d, xv + n * d.cin * d.h * d.w, cols);
        float* on = ov + n * d.cout * d.hw;
        gemm_nn(d.cout, d.hw, d.ckk, wv, cols, on, false);
        if (bv) {
            for (std::int64_t o = 0; o < d.cout; ++o) {
                float* row = on + o * d.hw;
                const float b = bv[o];
                for (std::int64_t i = 0; i < d.hw; ++i) row[i] += b;
            }
        }
    });

    const bool needs_grad =
        tape && (x.requires_grad() || weight.requires_grad() ||
                 (bias.defined() && bias.requires_grad()));
    if (needs_grad) {
        out.set_requires_grad(true);
        Tensor xin = x, win = weight, bin = bias, o = out;
        tape->record(out, [xin, win, bin, o, d, cols_cache]() mutable {
            const float* g = o.grad();
            if (xin.requires_grad()) {
                // dcols = W^T * g_n, scattered back with col2im
                std::vector<float> wt(static_cast<std::size_t>(d.ckk * d.cout));
                const float* wv = win.data();
                for (std::int64_t oc = 0; oc < d.cout; ++oc)
                    for (std::int64_t c = 0; c < d.ckk; ++c)
                        wt[c * d.cout + oc] = wv[oc * d.ckk + c];
                std::vector<float> dx(static_cast<std::size_t>(xin.numel()), 0.0f);
                float* dxv = dx.data();
                parallel_for(0, d.n, [&](std::int64_t n) {
                    std::vector<float> dcols(static_cast<std::size_t>(d.ckk * d.hw));
                    gemm_nn(d.ckk, d.hw, d.cout, wt.data(), g + n * d.cout * d.hw,
                            dcols.data(), false);
                    col2im_add(d, dcols.data(), dxv + n * d.cin * d.h * d.w);
                });
                xin.accumulate_grad(dx.data(), xin.numel());
            }
            if (win.requires_grad() && cols_cache) {
                std::vector<float> dw(static_cast<std::size_t>(d.cout * d.ckk), 0.0f);
                for (std::int64_t n = 0; n < d.n; ++n) {
                    gemm_nt(d.cout, d.ckk, d.hw, g + n * d.cout * d.hw,
                            cols_cache->data() + n * d.ckk * d.hw, dw.data(), true);
                }
                win.accumulate_grad(dw.data(), win.numel());
            }
            if (bin.defined() && bin.requires_grad()) {
                std::vector<float> db(static_cast<std::size_t>(d.cout), 0.0f);
                for (std::int64_t n = 0; n < d.n; ++n)
                    for (std::int64_t oc = 0; oc < d.cout; ++oc) {
                        const float* row = g + (n * d.cout + oc) * d.hw;
                        double acc = 0.0;
                        for (std::int64_t i = 0; i < d.hw; ++i) acc += row[i];
                        db[oc] += static_cast<float>(acc);
                    }
                bin.accumulate_grad(db.data(), d.cout);
            }
        });
    }
    return out;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.dim() != 2) throw ShapeError("linear input must be [N,F]");
    if (weight.dim() != 2) throw ShapeError("linear weight must be [K,F]");
    const std::int64_t n = x.shape()[0];
    const std::int64_t f = x.shape()[1];
    const std::int64_t k = weight.shape()[0];
    if (weight.shape()[1] != f)
        throw ShapeError("linear feature mismatch: input " + std::to_string(f) +
                         " vs weight " + std::to_string(weight.shape()[1]));
    if (bias.defined() && (bias.dim() != 1 || bias.shape()[0] != k))
        throw ShapeError("linear bias must be [K]");

    Tensor out = Tensor::zeros({n, k});
    gemm_nt(n, k, f, x.data(), weight.data(), out.data(), false);
    if (bias.defined()) {
        float* ov = out.data();
        const float* bv = bias.data();
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < k; ++j) ov[i * k + j] += bv[j];
    }

    const bool needs_grad =
        tape && (x.requires_grad() || weight.requires_grad() ||
                 (bias.defined() && bias.requires_grad()));
    if (needs_grad) {
        out.set_requires_grad(true);
        Tensor xin = x, win = weight, bin = bias, o = out;
        tape->record(out, [xin, win, bin, o, n, f, k]() mutable {
            const float* g = o.grad();
            if (xin.requires_grad()) {
                std::vector<float> dx(static_cast<std::size_t>(n * f));
                gemm_nn(n, f, k, g, win.data(), dx.data(), false);
                xin.accumulate_grad(dx.data(), n * f);
            }
            if (win.requires_grad()) {
                std::vector<float> dw(static_cast<std::size_t>(k * f));
                gemm_tn(n, f, k, g, xin.data(), dw.data(), false);
                win.accumulate_grad(dw.data(), k * f);
            }
            if (bin.defined() && bin.requires_grad()) {
                std::vector<float> db(static_cast<std::size_t>(k), 0.0f);
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < k; ++j) db[j] += g[i * k + j];
                bin.accumulate_grad(db.data(), k);
            }
        });
    }
    return out;
}

Tensor maxpool2d(Tape* tape, const Tensor& x, int kernel, int stride) {
    if (x.dim() != 4) throw ShapeError("maxpool2d input must be [N,C,H,W]");
    if (kernel < 1 || stride < 1) throw ConfigError("maxpool2d kernel/stride must be >= 1");
    const std::int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::int64_t hout = (h - kernel) / stride + 1;
    const std::int64_t wout = (w - kernel) / stride + 1;
    if (hout < 1 || wout < 1) throw ConfigError("maxpool2d output dims are non-positive");

    Tensor out = Tensor::zeros({n, c, hout, wout});
    auto argmax = std::make_shared<std::vector<std::int32_t>>(
        static_cast<std::size_t>(out.numel()));
    const float* xv = x.data();
    float* ov = out.data();
    std::int64_t oi = 0;
    for (std::int64_t i = 0; i < n * c; ++i) {
        const float* plane = xv + i * h * w;
        for (std::int64_t ho = 0; ho < hout; ++ho)
            for (std::int64_t wo = 0; wo < wout; ++wo, ++oi) {
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t best_idx = 0;
                for (std::int64_t r = 0; r < kernel; ++r)
                    for (std::int64_t s = 0; s < kernel; ++s) {
                        const std::int64_t hi = ho * stride + r;
                        const std::int64_t wi = wo * stride + s;
                        const float v = plane[hi * w + wi];
                        if (v > best) {  // strict: ties keep the first index
                            best = v;
                            best_idx = static_cast<std::int32_t>(hi * w + wi);
                        }
                    }
                ov[oi] = best;
                (*argmax)[static_cast<std::size_t>(oi)] = best_idx;
            }
    }

    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        const std::int64_t planes = n * c, hw = h * w, ohw = hout * wout;
        tape->record(out, [xin, o, argmax, planes, hw, ohw]() mutable {
            const float* g = o.grad();
            std::vector<float> gx(static_cast<std::size_t>(xin.numel()), 0.0f);
            for (std::int64_t i = 0; i < planes; ++i)
                for (std::int64_t j = 0; j < ohw; ++j)
                    gx[static_cast<std::size_t>(i * hw + (*argmax)[i * ohw + j])] +=
                        g[i * ohw + j];
            xin.accumulate_grad(gx.data(), xin.numel());
        });
    }
    return out;
}

Tensor global_avg_pool(Tape* tape, const Tensor& x) {
    if (x.dim() != 4) throw ShapeError("global_avg_pool input must be [N,C,H,W]");
    const std::int64_t n = x.shape()[0], c = x.shape()[1];
    const std::int64_t hw = x.shape()[2] * x.shape()[3];
    if (hw == 0) throw DomainError("global_avg_pool over an empty plane");
    Tensor out = Tensor::zeros({n, c, 1, 1});
    const float* xv = x.data();
    float* ov = out.data();
    for (std::int64_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const float* plane = xv + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) acc += plane[j];
        ov[i] = static_cast<float>(acc / static_cast<double>(hw));
    }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        tape->record(out, [xin, o, n, c, hw]() mutable {
            const float* g = o.grad();
            std::vector<float> gx(static_cast<std::size_t>(xin.numel()));
            const float inv = 1.0f / static_cast<float>(hw);
            for (std::int64_t i = 0; i < n * c; ++i) {
                const float gv = g[i] * inv;
                float* plane = gx.data() + i * hw;
                for (std::int64_t j = 0; j < hw; ++j) plane[j] = gv;
            }
            xin.accumulate_grad(gx.data(), xin.numel());
        });
    }
    return out;
}

Tensor flatten(Tape* tape, const Tensor& x) {
    if (x.dim() < 1) throw ShapeError("flatten needs at least one dim");
    const std::int64_t n = x.shape()[0];
    const std::int64_t rest = x.numel() / std::max<std::int64_t>(n, 1);
    Tensor out = Tensor::zeros({n, rest});
    std::memcpy(out.data(), x.data(), static_cast<std::size_t>(x.numel()) * sizeof(float));
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        tape->record(out, [xin, o]() mutable {
            xin.accumulate_grad(o.grad(), xin.numel());
        });
    }
    return out;
}

Tensor softmax(Tape* tape, const Tensor& logits, float temperature) {
    if (logits.dim() != 2) throw ShapeError("softmax expects [N,K] logits");
    if (!(temperature > 0.0f)) throw ConfigError("softmax temperature must be > 0");
    const std::int64_t n = logits.shape()[0], k = logits.shape()[1];
    Tensor out = Tensor::zeros({n, k});
    const float* zv = logits.data();
    float* pv = out.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const float* z = zv + i * k;
        float* p = pv + i * k;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, z[j] / temperature);
        double sum = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            p[j] = std::exp(z[j] / temperature - mx);
            sum += p[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (std::int64_t j = 0; j < k; ++j) p[j] *= inv;
    }
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor zin = logits, o = out;
        tape->record(out, [zin, o, n, k, temperature]() mutable {
            const float* g = o.grad();
            const float* p = o.data();
            std::vector<float> gz(static_cast<std::size_t>(n * k));
            for (std::int64_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::int64_t j = 0; j < k; ++j) dot += static_cast<double>(g[i * k + j]) * p[i * k + j];
                for (std::int64_t j = 0; j < k; ++j)
                    gz[i * k + j] = p[i * k + j] *
                                    (g[i * k + j] - static_cast<float>(dot)) / temperature;
            }
            zin.accumulate_grad(gz.data(), n * k);
        });
    }
    return out;
}

Tensor cross_entropy_with_labels(Tape* tape, const Tensor& logits,
                                 const std::vector<int>& labels) {
    if (logits.dim() != 2) throw ShapeError("cross_entropy expects [N,K] logits");
    const std::int64_t n = logits.shape()[0], k = logits.shape()[1];
    if (static_cast<std::int64_t>(labels.size()) != n)
        throw ContractError("label count does not match batch size");
    for (const int label : labels)
        if (label < 0 || label >= k)
            throw DataError("label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ")");

    auto probs = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n * k));
    const float* zv = logits.data();
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const float* z = zv + i * k;
        float* p = probs->data() + i * k;
        float mx = -std::numeric_limits<float>::infinity();
        for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, z[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < k; ++j) {
            p[j] = std::exp(z[j] - mx);
            sum += p[j];
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (std::int64_t j = 0; j < k; ++j) p[j] *= inv;
        total += std::log(sum) + mx - z[labels[static_cast<std::size_t>(i)]];
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
    if (tape && logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor zin = logits, o = out;
        tape->record(out, [zin, o, probs, labels, n, k]() mutable {
            const float g = o.grad()[0];
            std::vector<float> gz(static_cast<std::size_t>(n * k));
            const float invn = 1.0f / static_cast<float>(n);
            for (std::int64_t i = 0; i < n; ++i)
                for (std::int64_t j = 0; j < k; ++j) {
                    float d = (*probs)[i * k + j];
                    if (j == labels[static_cast<std::size_t>(i)]) d -= 1.0f;
                    gz[i * k + j] = g * d * invn;
                }
            zin.accumulate_grad(gz.data(), n * k);
        });
    }
    return out;
}

Tensor jitter(Tape* tape, const Tensor& x, int dy, int dx) {
    if (x.dim() != 4) throw ShapeError("jitter input must be [N,C,H,W]");
    const std::int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    const std::int64_t sy = ((dy % h) + h) % h;
    const std::int64_t sx = ((dx % w) + w) % w;
    Tensor out = Tensor::zeros(x.shape());
    const float* xv = x.data();
    float* ov = out.data();
    for (std::int64_t i = 0; i < n * c; ++i) {
        const float* src = xv + i * h * w;
        float* dst = ov + i * h * w;
        for (std::int64_t ho = 0; ho < h; ++ho) {
            const std::int64_t hi = (ho - sy + h) % h;
            for (std::int64_t wo = 0; wo < w; ++wo)
                dst[ho * w + wo] = src[hi * w + (wo - sx + w) % w];
        }
    }
    if (tape && x.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = x, o = out;
        tape->record(out, [xin, o, n, c, h, w, sy, sx]() mutable {
            const float* g = o.grad();
            std::vector<float> gx(static_cast<std::size_t>(xin.numel()));
            for (std::int64_t i = 0; i < n * c; ++i) {
                const float* gsrc = g + i * h * w;
                float* gdst = gx.data() + i * h * w;
                for (std::int64_t hi = 0; hi < h; ++hi) {
                    const std::int64_t ho = (hi + sy) % h;
                    for (std::int64_t wi = 0; wi < w; ++wi)
                        gdst[hi * w + wi] = gsrc[ho * w + (wi + sx) % w];
                }
            }
            xin.accumulate_grad(gx.data(), xin.numel());
        });
    }
    return out;
}

Tensor tv_loss(Tape* tape, const Tensor& images) {
    if (images.dim() != 4) throw ShapeError("tv_loss input must be [N,C,H,W]");
    const std::int64_t n = images.shape()[0], c = images.shape()[1];
    const std::int64_t h = images.shape()[2], w = images.shape()[3];
    const float* xv = images.data();
    double total = 0.0;
    for (std::int64_t i = 0; i < n * c; ++i) {
        const float* plane = xv + i * h * w;
        for (std::int64_t r = 0; r + 1 < h; ++r)
            for (std::int64_t s = 0; s < w; ++s)
                total += std::fabs(plane[(r + 1) * w + s] - plane[r * w + s]);
        for (std::int64_t r = 0; r < h; ++r)
            for (std::int64_t s = 0; s + 1 < w; ++s)
                total += std::fabs(plane[r * w + s + 1] - plane[r * w + s]);
    }
    Tensor out = Tensor::scalar(static_cast<float>(total / static_cast<double>(n)));
    if (tape && images.requires_grad()) {
        out.set_requires_grad(true);
        Tensor xin = images, o = out;
        tape->record(out, [xin, o, n, c, h, w]() mutable {
            const float g = o.grad()[0] / static_cast<float>(n);
            const float* xv = xin.data();
            std::vector<float> gx(static_cast<std::size_t>(xin.numel()), 0.0f);
            auto sign = [](float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); };
            for (std::int64_t i = 0; i < n * c; ++i) {
                const float* plane = xv + i * h * w;
                float* gplane = gx.data() + i * h * w;
                for (std::int64_t r = 0; r + 1 < h; ++r)
                    for (std::int64_t s = 0; s < w; ++s) {
                        const float sg = sign(plane[(r + 1) * w + s] - plane[r * w + s]) * g;
                        gplane[(r + 1) * w + s] += sg;
                        gplane[r * w + s] -= sg;
                    }
                for (std::int64_t r = 0; r < h; ++r)
                    for (std::int64_t s = 0; s + 1 < w; ++s) {
                        const float sg = sign(plane[r * w + s + 1] - plane[r * w + s]) * g;
                        gplane[r * w + s + 1] += sg;
                        gplane[r * w + s] -= sg;
                    }
            }
            xin.accumulate_grad(gx.data(), xin.numel());
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// BatchNorm2d
// ---------------------------------------------------------------------------

BnOut batchnorm2d_forward(Tape* tape, const Tensor& x, const Tensor& gamma,
                          const Tensor& beta, Tensor& running_mean,
                          Tensor& running_var, Tensor& num_batches,
                          bool train_mode, float momentum, float eps) {
    if (x.dim() != 4) throw ShapeError("batchnorm2d input must be [N,C,H,W]");
    const std::int64_t n = x.shape()[0], c = x.shape()[1];
    const std::int64_t hw = x.shape()[2] * x.shape()[3];
    const std::int64_t m = n * hw;
    if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c)
        throw ShapeError("batchnorm2d parameter length does not match channel count");
    if (!(eps > 0.0f)) throw ConfigError("batchnorm2d eps must be > 0");
    if (!(momentum > 0.0f && momentum <= 1.0f))
        throw ConfigError("batchnorm2d momentum must be in (0,1]");
    if (m == 0) throw DomainError("batchnorm2d over an empty batch");

    BnOut result;
    result.batch_mean = reduce(tape, Reduce::mean, x, {0, 2, 3}, false);
    result.batch_var = reduce(tape, Reduce::var_biased, x, {0, 2, 3}, false);

    // normalization statistics: batch in train mode, running in eval mode
    const float* mean_v = train_mode ? result.batch_mean.data() : running_mean.data();
    const float* var_v = train_mode ? result.batch_var.data() : running_var.data();

    auto invstd = std::make_shared<std::vector<float>>(static_cast<std::size_t>(c));
    for (std::int64_t i = 0; i < c; ++i)
        (*invstd)[static_cast<std::size_t>(i)] = 1.0f / std::sqrt(var_v[i] + eps);

    Tensor out = Tensor::zeros(x.shape());
    auto xhat = std::make_shared<std::vector<float>>(static_cast<std::size_t>(x.numel()));
    {
        const float* xv = x.data();
        const float* gv = gamma.data();
        const float* bv = beta.data();
        float* ov = out.data();
        float* hv = xhat->data();
        for (std::int64_t ni = 0; ni < n; ++ni)
            for (std::int64_t ci = 0; ci < c; ++ci) {
                const std::int64_t base = (ni * c + ci) * hw;
                const float mu = mean_v[ci];
                const float is = (*invstd)[static_cast<std::size_t>(ci)];
                const float ga = gv[ci];
                const float be = bv[ci];
                for (std::int64_t j = 0; j < hw; ++j) {
                    const float xn = (xv[base + j] - mu) * is;
                    hv[base + j] = xn;
                    ov[base + j] = xn * ga + be;
                }
            }
    }

    if (train_mode) {
        // running <- (1-momentum)*running + momentum*batch (biased batch var)
        float* rm = running_mean.data();
        float* rv = running_var.data();
        const float* bm = result.batch_mean.data();
        const float* bvar = result.batch_var.data();
        for (std::int64_t i = 0; i < c; ++i) {
            rm[i] = (1.0f - momentum) * rm[i] + momentum * bm[i];
            rv[i] = (1.0f - momentum) * rv[i] + momentum * bvar[i];
        }
        if (num_batches.defined() && num_batches.numel() == 1)
            num_batches.data()[0] += 1.0f;
    }

    const bool needs_grad =
        tape && (x.requires_grad() || gamma.requires_grad() || beta.requires_grad());
    if (needs_grad) {
        out.set_requires_grad(true);
        Tensor xin = x, gin = gamma, bin = beta, o = out;
        tape->record(out, [xin, gin, bin, o, xhat, invstd, n, c, hw, m,
                           train_mode]() mutable {
            const float* g = o.grad();
            const float* hv = xhat->data();
            std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
            std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
            for (std::int64_t ni = 0; ni < n; ++ni)
                for (std::int64_t ci = 0; ci < c; ++ci) {
                    const std::int64_t base = (ni * c + ci) * hw;
                    double s1 = 0.0, s2 = 0.0;
                    for (std::int64_t j = 0; j < hw; ++j) {
                        s1 += g[base + j];
                        s2 += static_cast<double>(g[base + j]) * hv[base + j];
                    }
                    sum_dy[static_cast<std::size_t>(ci)] += s1;
                    sum_dy_xhat[static_cast<std::size_t>(ci)] += s2;
                }
            if (bin.requires_grad()) {
                std::vector<float> db(static_cast<std::size_t>(c));
                for (std::int64_t i = 0; i < c; ++i)
                    db[i] = static_cast<float>(sum_dy[static_cast<std::size_t>(i)]);
                bin.accumulate_grad(db.data(), c);
            }
            if (gin.requires_grad()) {
                std::vector<float> dg(static_cast<std::size_t>(c));
                for (std::int64_t i = 0; i < c; ++i)
                    dg[i] = static_cast<float>(sum_dy_xhat[static_cast<std::size_t>(i)]);
                gin.accumulate_grad(dg.data(), c);
            }
            if (xin.requires_grad()) {
                std::vector<float> gx(static_cast<std::size_t>(xin.numel()));
                const float* gv = gin.data();
                const float fm = static_cast<float>(m);
                for (std::int64_t ni = 0; ni < n; ++ni)
                    for (std::int64_t ci = 0; ci < c; ++ci) {
                        const std::int64_t base = (ni * c + ci) * hw;
                        const float ga = gv[ci];
                        const float is = (*invstd)[static_cast<std::size_t>(ci)];
                        if (train_mode) {
                            const float sdy = static_cast<float>(sum_dy[static_cast<std::size_t>(ci)]);
                            const float sdyx =
                                static_cast<float>(sum_dy_xhat[static_cast<std::size_t>(ci)]);
                            const float scale = ga * is / fm;
                            for (std::int64_t j = 0; j < hw; ++j)
                                gx[base + j] = scale * (fm * g[base + j] - sdy -
                                                        hv[base + j] * sdyx);
                        } else {
                            // eval: stats are constants
                            const float scale = ga * is;
                            for (std::int64_t j = 0; j < hw; ++j)
                                gx[base + j] = scale * g[base + j];
                        }
                    }
                xin.accumulate_grad(gx.data(), xin.numel());
            }
        });
    }
    result.out = out;
    return result;
}

}  // namespace dfkd::ops
