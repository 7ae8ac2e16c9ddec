#pragma once

#include <array>
#include <string>
#include <vector>

#include "dfkd/ops.hpp"
#include "dfkd/rng.hpp"
#include "dfkd/tape.hpp"
#include "dfkd/tensor.hpp"

namespace dfkd {

enum class LayerKind { conv2d, batchnorm2d, linear, relu, maxpool2d, globalavgpool, flatten };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int in_channels = 0, out_channels = 0;  // conv2d
    int kernel = 0, stride = 1, padding = 0;  // conv2d / maxpool2d
    int in_features = 0, out_features = 0;  // linear
    int channels = 0;                       // batchnorm2d
    float eps = 1e-5f, momentum = 0.1f;     // batchnorm2d

    static LayerSpec conv(int in_c, int out_c, int kernel, int stride = 1, int padding = 0);
    static LayerSpec batchnorm(int channels, float eps = 1e-5f, float momentum = 0.1f);
    static LayerSpec relu();
    static LayerSpec maxpool(int kernel, int stride);
    static LayerSpec globalavgpool();
    static LayerSpec flatten();
    static LayerSpec linear(int in_f, int out_f);
};

struct Layer {
    LayerSpec spec;
    std::string name;
    Tensor weight, bias;  // conv2d, linear
    Tensor gamma, beta, running_mean, running_var, num_batches;  // batchnorm2d
    bool bn_train = false;
};

struct BnBatchStats {
    Tensor mean;  // [C], differentiable graph node
    Tensor var;   // [C], biased
};

struct ForwardResult {
    Tensor logits;
    std::vector<BnBatchStats> bn_stats;  // one per BN layer, in layer order
};

// Sequential CNN. Layer shapes are validated at build time; BN layers carry
// running statistics and a per-layer train/eval flag (eval-mode forward
// mutates nothing).
class Model {
public:
    Model() = default;

    // init_rng == nullptr leaves weights zero (checkpoint loading fills them).
    static Model build(std::vector<LayerSpec> specs, std::array<std::int64_t, 3> input_chw,
                       Rng* init_rng);

    ForwardResult forward(const Tensor& input, Tape* tape);

    void set_bn_mode(bool train);
    int bn_layer_count() const;

    // Learnable tensors. Conv/linear weights and biases always; BN affine
    // only when include_bn_affine.
    std::vector<Tensor> trainable_parameters(bool include_bn_affine) const;
    void zero_grad();

    // All persistent tensors in canonical checkpoint order.
    std::vector<std::pair<std::string, Tensor>> named_tensors() const;
    // Conv/linear weight tensors (the prunable set), in layer order.
    std::vector<std::pair<std::string, Tensor>> prunable_weights() const;

    const std::array<std::int64_t, 3>& input_chw() const { return input_chw_; }
    int num_classes() const;

    std::vector<Layer> layers;

private:
    std::array<std::int64_t, 3> input_chw_{};
};

// conv(Cin->16,3x3,pad1)-BN-ReLU -> conv(16->32,3x3,s2,pad1)-BN-ReLU ->
// conv(32->32,3x3,pad1)-BN-ReLU -> gap -> flatten -> linear(32->K)
Model make_tinynet(int in_channels, int image_size, int num_classes, std::uint64_t init_seed);

}  // namespace dfkd
