#include "dfkd/model.hpp"

#include <cmath>

#include "dfkd/error.hpp"

namespace dfkd {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::batchnorm2d: return "batchnorm2d";
        case LayerKind::linear: return "linear";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2d: return "maxpool2d";
        case LayerKind::globalavgpool: return "globalavgpool";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "conv2d") return LayerKind::conv2d;
    if (name == "batchnorm2d") return LayerKind::batchnorm2d;
    if (name == "linear") return LayerKind::linear;
    if (name == "relu") return LayerKind::relu;
    if (name == "maxpool2d") return LayerKind::maxpool2d;
    if (name == "globalavgpool") return LayerKind::globalavgpool;
    if (name == "flatten") return LayerKind::flatten;
    throw ConfigError("unknown layer kind: " + name);
}

LayerSpec LayerSpec::conv(int in_c, int out_c, int kernel, int stride, int padding) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kernel = kernel;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::batchnorm(int channels, float eps, float momentum) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm2d;
    s.channels = channels;
    s.eps = eps;
    s.momentum = momentum;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

LayerSpec LayerSpec::maxpool(int kernel, int stride) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.kernel = kernel;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::globalavgpool() {
    LayerSpec s;
    s.kind = LayerKind::globalavgpool;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

LayerSpec LayerSpec::linear(int in_f, int out_f) {
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.in_features = in_f;
    s.out_features = out_f;
    return s;
}

Model Model::build(std::vector<LayerSpec> specs, std::array<std::int64_t, 3> input_chw,
                   Rng* init_rng) {
    Model model;
    model.input_chw_ = input_chw;

    // validate composition by propagating the activation shape
    std::int64_t c = input_chw[0], h = input_chw[1], w = input_chw[2];
    bool spatial = true;  // false after flatten: activation is [N, c]
    int conv_idx = 0, bn_idx = 0, fc_idx = 0, relu_idx = 0, pool_idx = 0;

    for (const auto& spec : specs) {
        Layer layer;
        layer.spec = spec;
        switch (spec.kind) {
            case LayerKind::conv2d: {
                if (!spatial) throw ConfigError("conv2d after flatten");
                if (spec.in_channels != c)
                    throw ConfigError("conv2d expects " + std::to_string(spec.in_channels) +
                                      " input channels, got " + std::to_string(c));
                if (spec.kernel < 1 || spec.stride < 1 || spec.padding < 0)
                    throw ConfigError("conv2d kernel/stride/padding invalid");
                const std::int64_t ho = (h + 2 * spec.padding - spec.kernel) / spec.stride + 1;
                const std::int64_t wo = (w + 2 * spec.padding - spec.kernel) / spec.stride + 1;
                if (ho < 1 || wo < 1) throw ConfigError("conv2d output spatial dims non-positive");
                layer.name = "conv" + std::to_string(++conv_idx);
                layer.weight = Tensor::zeros(
                    {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}, true);
                layer.bias = Tensor::zeros({spec.out_channels}, true);
                if (init_rng) {
                    const float std_dev = std::sqrt(
                        2.0f / static_cast<float>(spec.in_channels * spec.kernel * spec.kernel));
                    float* wv = layer.weight.data();
                    for (std::int64_t i = 0; i < layer.weight.numel(); ++i)
                        wv[i] = init_rng->normal() * std_dev;
                }
                c = spec.out_channels;
                h = ho;
                w = wo;
                break;
            }
            case LayerKind::batchnorm2d: {
                if (!spatial) throw ConfigError("batchnorm2d after flatten");
                if (spec.channels != c)
                    throw ConfigError("batchnorm2d channel mismatch: expects " +
                                      std::to_string(spec.channels) + ", got " + std::to_string(c));
                if (!(spec.eps > 0.0f)) throw ConfigError("batchnorm2d eps must be > 0");
                if (!(spec.momentum > 0.0f && spec.momentum <= 1.0f))
                    throw ConfigError("batchnorm2d momentum must be in (0,1]");
                layer.name = "bn" + std::to_string(++bn_idx);
                layer.gamma = Tensor::full({spec.channels}, 1.0f, true);
                layer.beta = Tensor::zeros({spec.channels}, true);
                layer.running_mean = Tensor::zeros({spec.channels});
                layer.running_var = Tensor::full({spec.channels}, 1.0f);
                layer.num_batches = Tensor::zeros({1});
                break;
            }
            case LayerKind::linear: {
                if (spatial) throw ConfigError("linear requires flatten first");
                if (spec.in_features != c)
                    throw ConfigError("linear expects " + std::to_string(spec.in_features) +
                                      " features, got " + std::to_string(c));
                layer.name = "fc" + std::to_string(++fc_idx);
                layer.weight = Tensor::zeros({spec.out_features, spec.in_features}, true);
                layer.bias = Tensor::zeros({spec.out_features}, true);
                if (init_rng) {
                    const float std_dev = std::sqrt(2.0f / static_cast<float>(spec.in_features));
                    float* wv = layer.weight.data();
                    for (std::int64_t i = 0; i < layer.weight.numel(); ++i)
                        wv[i] = init_rng->normal() * std_dev;
                }
                c = spec.out_features;
                break;
            }
            case LayerKind::relu:
                layer.name = "relu" + std::to_string(++relu_idx);
                break;
            case LayerKind::maxpool2d: {
                if (!spatial) throw ConfigError("maxpool2d after flatten");
                const std::int64_t ho = (h - spec.kernel) / spec.stride + 1;
                const std::int64_t wo = (w - spec.kernel) / spec.stride + 1;
                if (ho < 1 || wo < 1) throw ConfigError("maxpool2d output dims non-positive");
                layer.name = "pool" + std::to_string(++pool_idx);
                h = ho;
                w = wo;
                break;
            }
            case LayerKind::globalavgpool:
                if (!spatial) throw ConfigError("globalavgpool after flatten");
                layer.name = "gap";
                h = 1;
                w = 1;
                break;
            case LayerKind::flatten:
                if (!spatial) throw ConfigError("duplicate flatten");
                layer.name = "flatten";
                c = c * h * w;
                spatial = false;
                break;
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

ForwardResult Model::forward(const Tensor& input, Tape* tape) {
    if (input.dim() != 4 || input.shape()[1] != input_chw_[0])
        throw ShapeError("model input must be [N," + std::to_string(input_chw_[0]) +
                         ",H,W], got " + shape_str(input.shape()));
    ForwardResult result;
    Tensor x = input;
    for (auto& layer : layers) {
        switch (layer.spec.kind) {
            case LayerKind::conv2d:
                x = ops::conv2d(tape, x, layer.weight, layer.bias, layer.spec.stride,
                                layer.spec.padding);
                break;
            case LayerKind::batchnorm2d: {
                auto bn = ops::batchnorm2d_forward(tape, x, layer.gamma, layer.beta,
                                                   layer.running_mean, layer.running_var,
                                                   layer.num_batches, layer.bn_train,
                                                   layer.spec.momentum, layer.spec.eps);
                x = bn.out;
                result.bn_stats.push_back({bn.batch_mean, bn.batch_var});
                break;
            }
            case LayerKind::linear:
                x = ops::linear(tape, x, layer.weight, layer.bias);
                break;
            case LayerKind::relu:
                x = ops::relu(tape, x);
                break;
            case LayerKind::maxpool2d:
                x = ops::maxpool2d(tape, x, layer.spec.kernel, layer.spec.stride);
                break;
            case LayerKind::globalavgpool:
                x = ops::global_avg_pool(tape, x);
                break;
            case LayerKind::flatten:
                x = ops::flatten(tape, x);
                break;
        }
    }
    result.logits = x;
    return result;
}

void Model::set_bn_mode(bool train) {
    for (auto& layer : layers)
        if (layer.spec.kind == LayerKind::batchnorm2d) layer.bn_train = train;
}

int Model::bn_layer_count() const {
    int n = 0;
    for (const auto& layer : layers)
        if (layer.spec.kind == LayerKind::batchnorm2d) ++n;
    return n;
}

std::vector<Tensor> Model::trainable_parameters(bool include_bn_affine) const {
    std::vector<Tensor> params;
    for (const auto& layer : layers) {
        if (layer.spec.kind == LayerKind::conv2d || layer.spec.kind == LayerKind::linear) {
            params.push_back(layer.weight);
            params.push_back(layer.bias);
        } else if (layer.spec.kind == LayerKind::batchnorm2d && include_bn_affine) {
            params.push_back(layer.gamma);
            params.push_back(layer.beta);
        }
    }
    return params;
}

void Model::zero_grad() {
    for (auto& layer : layers) {
        for (Tensor* t : {&layer.weight, &layer.bias, &layer.gamma, &layer.beta})
            if (t->defined()) t->zero_grad();
    }
}

std::vector<std::pair<std::string, Tensor>> Model::named_tensors() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& layer : layers) {
        switch (layer.spec.kind) {
            case LayerKind::conv2d:
            case LayerKind::linear:
                out.emplace_back(layer.name + ".weight", layer.weight);
                out.emplace_back(layer.name + ".bias", layer.bias);
                break;
            case LayerKind::batchnorm2d:
                out.emplace_back(layer.name + ".gamma", layer.gamma);
                out.emplace_back(layer.name + ".beta", layer.beta);
                out.emplace_back(layer.name + ".running_mean", layer.running_mean);
                out.emplace_back(layer.name + ".running_var", layer.running_var);
                out.emplace_back(layer.name + ".num_batches", layer.num_batches);
                break;
            default:
                break;
        }
    }
    return out;
}

std::vector<std::pair<std::string, Tensor>> Model::prunable_weights() const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& layer : layers)
        if (layer.spec.kind == LayerKind::conv2d || layer.spec.kind == LayerKind::linear)
            out.emplace_back(layer.name + ".weight", layer.weight);
    return out;
}

int Model::num_classes() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
        if (it->spec.kind == LayerKind::linear) return it->spec.out_features;
    return 0;
}

Model make_tinynet(int in_channels, int image_size, int num_classes, std::uint64_t init_seed) {
    Rng rng(init_seed, rng_stream::kModelInit);
    std::vector<LayerSpec> specs = {
        LayerSpec::conv(in_channels, 16, 3, 1, 1),
        LayerSpec::batchnorm(16),
        LayerSpec::relu(),
        LayerSpec::conv(16, 32, 3, 2, 1),
        LayerSpec::batchnorm(32),
        LayerSpec::relu(),
        LayerSpec::conv(32, 32, 3, 1, 1),
        LayerSpec::batchnorm(32),
        LayerSpec::relu(),
        LayerSpec::globalavgpool(),
        LayerSpec::flatten(),
        LayerSpec::linear(32, num_classes),
    };
    return Model::build(std::move(specs), {in_channels, image_size, image_size}, &rng);
}

}  // namespace dfkd
