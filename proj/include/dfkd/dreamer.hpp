#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfkd/model.hpp"

namespace dfkd {

// ---------------------------------------------------------------------------
// Input-space synthesis against a frozen teacher: noise batches are optimized
// to minimize  L = L_target + lambda_bn * L_bn + lambda_tv * L_tv,  where
// L_bn matches the teacher's per-layer BN batch statistics to its stored
// running statistics. The teacher's parameters and running stats are never
// touched; batch statistics are tapped as differentiable observables while
// normalization keeps using the running stats (true eval behavior).
// ---------------------------------------------------------------------------

enum class TargetMode { entropy, balanced_ce };

struct SynthesisConfig {
    std::int64_t n_images = 1024;
    int batch = 64;
    int iters = 200;
    float lr = 0.05f;
    float lambda_bn = 10.0f;
    float lambda_tv = 1e-5f;
    int jitter_max = 2;
    TargetMode target_mode = TargetMode::entropy;
    float clamp_min = -3.0f;
    float clamp_max = 3.0f;
    std::uint64_t seed = 0;
    bool plain_sgd = false;  // force momentum-free SGD instead of Adam

    void validate() const;
};

const char* target_mode_name(TargetMode mode);
TargetMode target_mode_from_name(const std::string& name);

struct IterLossRow {
    int iter = 0;
    double entropy = 0.0;
    double bn = 0.0;
    double tv = 0.0;
    double total = 0.0;
};

using IterLossSink = std::function<void(const IterLossRow&)>;

// Mean over the batch of -sum_k p log p (0 log 0 := 0 via a 1e-12 log floor).
Tensor entropy_loss(Tape* tape, const Tensor& probs);

// sum_l ( ||mu_l - mu_run_l||_2 + ||var_l - var_run_l||_2 ), unsquared norms.
Tensor bn_feature_loss(Tape* tape, const std::vector<BnBatchStats>& batch_stats,
                       const std::vector<std::pair<Tensor, Tensor>>& running);

// The teacher's (running_mean, running_var) pairs in BN layer order.
std::vector<std::pair<Tensor, Tensor>> bn_running_stats(const Model& teacher);

struct BatchResult {
    Tensor images;  // final un-jittered batch, clamped
    Tensor logits;  // teacher eval-mode logits on the final images
};

// Synthesis puts the teacher in eval mode and clears requires_grad on its
// parameters (gradients flow to the images only); its tensor values are
// never modified.
BatchResult synthesize_batch(Model& teacher, const SynthesisConfig& cfg, int batch_size,
                             Rng& rng, const IterLossSink& sink = nullptr);

struct SynDataset {
    Tensor images;          // [n,C,H,W]
    Tensor teacher_logits;  // [n,K]
    std::string teacher_hash;
    SynthesisConfig config;
};

// Per-batch loss sink: sink(batch_index, row).
using BatchLossSink = std::function<void(int, const IterLossRow&)>;

// Synthesizes ceil(n_images / batch) independent batches (rng sub-stream
// seed ^ batch_index), parallelizable across workers; output ordering is by
// batch index. Deterministic given the seed.
SynDataset generate_dataset(Model& teacher, const SynthesisConfig& cfg,
                            const std::string& teacher_hash,
                            const BatchLossSink& sink = nullptr);

// DFKS container: magic "DFKS", u32 version, u64 JSON header length, JSON
// header, then the image blob and logits blob (little-endian f32).
inline constexpr std::uint32_t kDfksVersion = 1;

std::vector<std::uint8_t> serialize_dfks(const SynDataset& data);
void save_dfks(const SynDataset& data, const std::string& path);
SynDataset load_dfks(const std::string& path);

// One binary PPM (P6) per image, min-max denormalized to [0,255]
// (a constant image maps to 0); files are named img_{index:05}.ppm.
void dump_ppm(const SynDataset& data, const std::string& dir);

}  // namespace dfkd
