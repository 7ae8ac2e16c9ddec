#include "dfkd/datasets.hpp"

#include <cmath>
#include <filesystem>

#include "dfkd/error.hpp"
#include "dfkd/util.hpp"

namespace dfkd {

namespace {

enum class Pattern { square, circle, hstripes, diag_cross, vstripes, ring, triangle, checker };

constexpr int kPatternCount = 8;

// u, v in [-1,1] relative to the jittered center; scale in (0,1].
bool pattern_hit(Pattern p, float u, float v, float scale) {
    switch (p) {
        case Pattern::square:
            return std::max(std::fabs(u), std::fabs(v)) <= 0.62f * scale;
        case Pattern::circle:
            return u * u + v * v <= 0.65f * scale * 0.65f * scale;
        case Pattern::hstripes:
            if (std::fabs(u) > 0.85f * scale || std::fabs(v) > 0.85f * scale) return false;
            return static_cast<int>(std::floor((v + 1.0f) * 4.0f)) % 2 == 0;
        case Pattern::diag_cross:
            if (std::fabs(u) > 0.9f * scale || std::fabs(v) > 0.9f * scale) return false;
            return std::fabs(u - v) <= 0.25f * scale || std::fabs(u + v) <= 0.25f * scale;
        case Pattern::vstripes:
            if (std::fabs(u) > 0.85f * scale || std::fabs(v) > 0.85f * scale) return false;
            return static_cast<int>(std::floor((u + 1.0f) * 4.0f)) % 2 == 0;
        case Pattern::ring: {
            const float r = std::sqrt(u * u + v * v);
            return r >= 0.4f * scale && r <= 0.7f * scale;
        }
        case Pattern::triangle: {
            const float s = scale;
            if (v < -0.65f * s || v > 0.65f * s) return false;
            const float t = (0.65f * s - v) / (1.3f * s);  // 0 at top, 1 at base
            return std::fabs(u) <= 0.75f * s * t;
        }
        case Pattern::checker: {
            if (std::fabs(u) > 0.8f * scale || std::fabs(v) > 0.8f * scale) return false;
            const int cu = static_cast<int>(std::floor((u + 1.0f) * 2.5f));
            const int cv = static_cast<int>(std::floor((v + 1.0f) * 2.5f));
            return (cu + cv) % 2 == 0;
        }
    }
    return false;
}

// Raw (unstandardized) split; labels cycle 0..K-1.
void generate_split(const ShapesConfig& cfg, Rng& rng, std::int64_t count,
                    std::vector<float>& pixels, std::vector<int>& labels) {
    const int s = cfg.image_size;
    const std::int64_t plane = static_cast<std::int64_t>(s) * s;
    pixels.assign(static_cast<std::size_t>(count * 3 * plane), 0.0f);
    labels.resize(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        const int label = static_cast<int>(i % cfg.classes);
        labels[static_cast<std::size_t>(i)] = label;
        const auto pattern = static_cast<Pattern>(label);

        const float cx = rng.uniform_float(-0.18f, 0.18f);
        const float cy = rng.uniform_float(-0.18f, 0.18f);
        const float scale = rng.uniform_float(0.65f, 1.0f);
        float bg[3], fg[3];
        for (auto& b : bg) b = rng.uniform_float(0.0f, 0.35f);
        for (auto& f : fg) f = rng.uniform_float(0.55f, 1.0f);

        float* img = pixels.data() + i * 3 * plane;
        for (int y = 0; y < s; ++y) {
            const float v = (2.0f * (static_cast<float>(y) + 0.5f) / static_cast<float>(s)) -
                            1.0f - cy;
            for (int x = 0; x < s; ++x) {
                const float u = (2.0f * (static_cast<float>(x) + 0.5f) / static_cast<float>(s)) -
                                1.0f - cx;
                const bool hit = pattern_hit(pattern, u, v, scale);
                for (int ch = 0; ch < 3; ++ch)
                    img[ch * plane + y * s + x] = hit ? fg[ch] : bg[ch];
            }
        }
        // additive Gaussian pixel noise, sigma 0.1
        for (std::int64_t j = 0; j < 3 * plane; ++j) img[j] += 0.1f * rng.normal();
    }
}

}  // namespace

int shapes_pattern_count() { return kPatternCount; }

ShapesData generate_shapes(const ShapesConfig& cfg) {
    if (cfg.classes < 2) throw ConfigError("shapes dataset needs at least 2 classes");
    if (cfg.classes > kPatternCount)
        throw ConfigError("shapes dataset supports at most " + std::to_string(kPatternCount) +
                          " classes, got " + std::to_string(cfg.classes));
    if (cfg.image_size < 8) throw ConfigError("shapes image_size must be >= 8");
    if (cfg.train_count < 1 || cfg.test_count < 1)
        throw ConfigError("shapes train/test counts must be >= 1");

    Rng train_rng(cfg.seed, rng_stream::kDatasetTrain);
    Rng test_rng(cfg.seed, rng_stream::kDatasetTest);

    std::vector<float> train_pixels, test_pixels;
    std::vector<int> train_labels, test_labels;
    generate_split(cfg, train_rng, cfg.train_count, train_pixels, train_labels);
    generate_split(cfg, test_rng, cfg.test_count, test_pixels, test_labels);

    // standardization constants from the train split
    const std::int64_t plane = static_cast<std::int64_t>(cfg.image_size) * cfg.image_size;
    ShapesData data;
    for (int ch = 0; ch < 3; ++ch) {
        double sum = 0.0, sum_sq = 0.0;
        std::int64_t n = 0;
        for (std::int64_t i = 0; i < cfg.train_count; ++i) {
            const float* img = train_pixels.data() + i * 3 * plane + ch * plane;
            for (std::int64_t j = 0; j < plane; ++j) {
                sum += img[j];
                sum_sq += static_cast<double>(img[j]) * img[j];
                ++n;
            }
        }
        const double mean = sum / static_cast<double>(n);
        const double var = sum_sq / static_cast<double>(n) - mean * mean;
        data.channel_mean[static_cast<std::size_t>(ch)] = mean;
        data.channel_std[static_cast<std::size_t>(ch)] = std::sqrt(std::max(var, 1e-12));
    }

    auto standardize = [&](std::vector<float>& pixels, std::int64_t count) {
        for (std::int64_t i = 0; i < count; ++i)
            for (int ch = 0; ch < 3; ++ch) {
                float* img = pixels.data() + i * 3 * plane + ch * plane;
                const float mean = static_cast<float>(data.channel_mean[static_cast<std::size_t>(ch)]);
                const float inv_std =
                    static_cast<float>(1.0 / data.channel_std[static_cast<std::size_t>(ch)]);
                for (std::int64_t j = 0; j < plane; ++j) img[j] = (img[j] - mean) * inv_std;
            }
    };
    standardize(train_pixels, cfg.train_count);
    standardize(test_pixels, cfg.test_count);

    data.train.images = Tensor::from_vector({cfg.train_count, 3, cfg.image_size, cfg.image_size},
                                            std::move(train_pixels));
    data.train.labels = std::move(train_labels);
    data.train.num_classes = cfg.classes;
    data.test.images = Tensor::from_vector({cfg.test_count, 3, cfg.image_size, cfg.image_size},
                                           std::move(test_pixels));
    data.test.labels = std::move(test_labels);
    data.test.num_classes = cfg.classes;
    return data;
}

LabeledDataset load_cifar10_batch_file(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const std::int64_t expected = kCifarRecordsPerBatch * kCifarRecordBytes;
    if (static_cast<std::int64_t>(bytes.size()) != expected)
        throw FormatError("cifar10 batch file '" + path + "' has " +
                          std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(expected) + " (mismatch at offset " +
                          std::to_string(std::min<std::int64_t>(
                              static_cast<std::int64_t>(bytes.size()), expected)) + ")");

    LabeledDataset data;
    data.num_classes = 10;
    data.labels.resize(kCifarRecordsPerBatch);
    std::vector<float> pixels(static_cast<std::size_t>(kCifarRecordsPerBatch) * 3072);
    for (std::int64_t i = 0; i < kCifarRecordsPerBatch; ++i) {
        const std::int64_t rec = i * kCifarRecordBytes;
        const std::uint8_t label = bytes[static_cast<std::size_t>(rec)];
        if (label > 9)
            throw FormatError("cifar10 batch file '" + path + "': label byte " +
                              std::to_string(label) + " > 9 at offset " + std::to_string(rec));
        data.labels[static_cast<std::size_t>(i)] = label;
        for (int ch = 0; ch < 3; ++ch) {
            const float mean = kCifarMean[static_cast<std::size_t>(ch)];
            const float inv_std = 1.0f / kCifarStd[static_cast<std::size_t>(ch)];
            const std::uint8_t* src = bytes.data() + rec + 1 + ch * 1024;
            float* dst = pixels.data() + i * 3072 + ch * 1024;
            for (int j = 0; j < 1024; ++j)
                dst[j] = (static_cast<float>(src[j]) / 255.0f - mean) * inv_std;
        }
    }
    data.images = Tensor::from_vector({kCifarRecordsPerBatch, 3, 32, 32}, std::move(pixels));
    return data;
}

Cifar10Data load_cifar10_binary(const std::string& dir) {
    Cifar10Data out;
    std::vector<float> train_pixels;
    std::vector<int> train_labels;
    train_pixels.reserve(static_cast<std::size_t>(50000) * 3072);
    for (int b = 1; b <= 5; ++b) {
        const std::string path =
            (std::filesystem::path(dir) / ("data_batch_" + std::to_string(b) + ".bin")).string();
        LabeledDataset batch = load_cifar10_batch_file(path);
        const float* v = batch.images.data();
        train_pixels.insert(train_pixels.end(), v, v + batch.images.numel());
        train_labels.insert(train_labels.end(), batch.labels.begin(), batch.labels.end());
    }
    if (static_cast<std::int64_t>(train_labels.size()) != 50000)
        throw FormatError("cifar10 train split has " + std::to_string(train_labels.size()) +
                          " records, expected 50000");
    out.train.images = Tensor::from_vector({50000, 3, 32, 32}, std::move(train_pixels));
    out.train.labels = std::move(train_labels);
    out.train.num_classes = 10;

    out.test = load_cifar10_batch_file(
        (std::filesystem::path(dir) / "test_batch.bin").string());
    if (out.test.size() != 10000)
        throw FormatError("cifar10 test split has " + std::to_string(out.test.size()) +
                          " records, expected 10000");
    return out;
}

}  // namespace dfkd
