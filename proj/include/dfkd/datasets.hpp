#pragma once

#include <array>
#include <string>
#include <vector>

#include "dfkd/tensor.hpp"

namespace dfkd {

struct LabeledDataset {
    Tensor images;            // [N,C,H,W], standardized
    std::vector<int> labels;  // length N
    int num_classes = 0;

    std::int64_t size() const { return images.defined() ? images.shape()[0] : 0; }
};

// ---------------------------------------------------------------------------
// Procedural shapes dataset: K classes of geometric patterns with per-image
// position/scale jitter and Gaussian pixel noise, standardized per channel
// with statistics computed from the generated train split.
// ---------------------------------------------------------------------------

struct ShapesConfig {
    int classes = 4;
    int image_size = 16;
    std::int64_t train_count = 2000;
    std::int64_t test_count = 1000;
    std::uint64_t seed = 0;
};

// Largest supported class count (size of the pattern library).
int shapes_pattern_count();

struct ShapesData {
    LabeledDataset train;
    LabeledDataset test;
    std::array<double, 3> channel_mean{};
    std::array<double, 3> channel_std{};
};

ShapesData generate_shapes(const ShapesConfig& cfg);

// ---------------------------------------------------------------------------
// CIFAR-10 binary format: records of 1 label byte + 3072 pixel bytes
// (row-major R,G,B planes); each batch file is exactly 10000 records.
// Pixels are scaled to [0,1] and standardized with the usual CIFAR-wide
// per-channel constants.
// ---------------------------------------------------------------------------

inline constexpr std::int64_t kCifarRecordBytes = 3073;
inline constexpr std::int64_t kCifarRecordsPerBatch = 10000;
inline constexpr std::array<float, 3> kCifarMean = {0.4914f, 0.4822f, 0.4465f};
inline constexpr std::array<float, 3> kCifarStd = {0.2470f, 0.2435f, 0.2616f};

LabeledDataset load_cifar10_batch_file(const std::string& path);

struct Cifar10Data {
    LabeledDataset train;  // 50000
    LabeledDataset test;   // 10000
};

// Expects data_batch_1.bin .. data_batch_5.bin and test_batch.bin in dir.
Cifar10Data load_cifar10_binary(const std::string& dir);

}  // namespace dfkd
