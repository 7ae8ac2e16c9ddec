#include "dfkd/dreamer.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "dfkd/error.hpp"
#include "dfkd/optim.hpp"
#include "dfkd/threading.hpp"
#include "dfkd/util.hpp"

namespace dfkd {

using json = nlohmann::json;

void SynthesisConfig::validate() const {
    if (n_images < 1) throw ConfigError("synthesis n_images must be >= 1");
    if (batch < 1) throw ConfigError("synthesis batch must be >= 1");
    if (batch > n_images) throw ConfigError("synthesis batch must be <= n_images");
    if (iters < 0) throw ConfigError("synthesis iters must be >= 0");
    if (!(lr > 0.0f)) throw ConfigError("synthesis lr must be > 0");
    if (lambda_bn < 0.0f || lambda_tv < 0.0f)
        throw ConfigError("synthesis loss weights must be >= 0");
    if (jitter_max < 0) throw ConfigError("synthesis jitter_max must be >= 0");
    if (!(clamp_min < clamp_max)) throw ConfigError("synthesis clamp range is empty");
}

const char* target_mode_name(TargetMode mode) {
    return mode == TargetMode::entropy ? "entropy" : "balanced_ce";
}

TargetMode target_mode_from_name(const std::string& name) {
    if (name == "entropy") return TargetMode::entropy;
    if (name == "balanced_ce") return TargetMode::balanced_ce;
    throw ConfigError("unknown target_mode: " + name);
}

Tensor entropy_loss(Tape* tape, const Tensor& probs) {
    if (probs.dim() != 2) throw ShapeError("entropy_loss expects [N,K] probabilities");
    const float* p = probs.data();
    for (std::int64_t i = 0; i < probs.numel(); ++i)
        if (p[i] < 0.0f)
            throw ContractError("entropy_loss: negative probability " + std::to_string(p[i]));
    const auto n = static_cast<float>(probs.shape()[0]);
    Tensor logp = ops::log(tape, ops::clamp(tape, probs, 1e-12f, 1.0f));
    Tensor plogp = ops::mul(tape, probs, logp);
    return ops::mul(tape, ops::sum_all(tape, plogp), -1.0f / n);
}

Tensor bn_feature_loss(Tape* tape, const std::vector<BnBatchStats>& batch_stats,
                       const std::vector<std::pair<Tensor, Tensor>>& running) {
    if (batch_stats.size() != running.size())
        throw ContractError("bn_feature_loss: batch stats for " +
                            std::to_string(batch_stats.size()) + " layers vs " +
                            std::to_string(running.size()) + " running entries");
    if (batch_stats.empty()) throw ContractError("bn_feature_loss: no BN layers");
    Tensor loss = Tensor::scalar(0.0f);
    for (std::size_t l = 0; l < batch_stats.size(); ++l) {
        const auto& [run_mean, run_var] = running[l];
        if (batch_stats[l].mean.numel() != run_mean.numel() ||
            batch_stats[l].var.numel() != run_var.numel())
            throw ContractError("bn_feature_loss: channel count mismatch at BN layer " +
                                std::to_string(l));
        Tensor dm = ops::sub(tape, batch_stats[l].mean, run_mean);
        Tensor dv = ops::sub(tape, batch_stats[l].var, run_var);
        Tensor mean_norm = ops::pow(tape, ops::sum_all(tape, ops::mul(tape, dm, dm)), 0.5f);
        Tensor var_norm = ops::pow(tape, ops::sum_all(tape, ops::mul(tape, dv, dv)), 0.5f);
        loss = ops::add(tape, loss, ops::add(tape, mean_norm, var_norm));
    }
    return loss;
}

std::vector<std::pair<Tensor, Tensor>> bn_running_stats(const Model& teacher) {
    std::vector<std::pair<Tensor, Tensor>> out;
    for (const auto& layer : teacher.layers)
        if (layer.spec.kind == LayerKind::batchnorm2d)
            out.emplace_back(layer.running_mean, layer.running_var);
    return out;
}

BatchResult synthesize_batch(Model& teacher, const SynthesisConfig& cfg, int batch_size,
                             Rng& rng, const IterLossSink& sink) {
    cfg.validate();
    if (teacher.bn_layer_count() < 1)
        throw ContractError("synthesis requires a teacher with at least one BN layer");
    teacher.set_bn_mode(false);
    for (auto& p : teacher.trainable_parameters(true)) p.set_requires_grad(false);
    const auto chw = teacher.input_chw();
    const auto running = bn_running_stats(teacher);
    const int classes = teacher.num_classes();

    Tensor x = Tensor::randn({batch_size, chw[0], chw[1], chw[2]}, rng, true);

    std::vector<int> round_robin;
    if (cfg.target_mode == TargetMode::balanced_ce) {
        round_robin.resize(static_cast<std::size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) round_robin[static_cast<std::size_t>(i)] = i % classes;
    }

    SgdMomentum sgd(cfg.lr, 0.0f);
    Adam adam(cfg.lr);
    const std::vector<Tensor> params = {x};

    for (int it = 0; it < cfg.iters; ++it) {
        const int dy = cfg.jitter_max > 0
                           ? static_cast<int>(rng.uniform_int(-cfg.jitter_max, cfg.jitter_max))
                           : 0;
        const int dx = cfg.jitter_max > 0
                           ? static_cast<int>(rng.uniform_int(-cfg.jitter_max, cfg.jitter_max))
                           : 0;

        Tape tape;
        Tensor xj = ops::jitter(&tape, x, dy, dx);
        ForwardResult fw = teacher.forward(xj, &tape);

        Tensor target_loss;
        if (cfg.target_mode == TargetMode::entropy) {
            Tensor probs = ops::softmax(&tape, fw.logits, 1.0f);
            target_loss = entropy_loss(&tape, probs);
        } else {
            target_loss = ops::cross_entropy_with_labels(&tape, fw.logits, round_robin);
        }
        Tensor bn = bn_feature_loss(&tape, fw.bn_stats, running);
        Tensor tv = ops::tv_loss(&tape, xj);
        Tensor total = ops::add(&tape, target_loss,
                                ops::add(&tape, ops::mul(&tape, bn, cfg.lambda_bn),
                                         ops::mul(&tape, tv, cfg.lambda_tv)));

        IterLossRow row;
        row.iter = it;
        row.entropy = target_loss.item();
        row.bn = bn.item();
        row.tv = tv.item();
        row.total = total.item();
        if (!std::isfinite(row.total))
            throw DomainError("synthesis diverged at iteration " + std::to_string(it) +
                              " (target=" + std::to_string(row.entropy) +
                              ", bn=" + std::to_string(row.bn) +
                              ", tv=" + std::to_string(row.tv) + ")");

        x.zero_grad();
        tape.backward(total);
        if (cfg.plain_sgd)
            sgd.step(params);
        else
            adam.step(params);

        float* xv = x.data();
        for (std::int64_t i = 0; i < x.numel(); ++i)
            xv[i] = std::min(std::max(xv[i], cfg.clamp_min), cfg.clamp_max);

        if (sink) sink(row);
    }

    BatchResult result;
    result.images = x.deep_copy();
    result.logits = teacher.forward(result.images, nullptr).logits;
    return result;
}

SynDataset generate_dataset(Model& teacher, const SynthesisConfig& cfg,
                            const std::string& teacher_hash, const BatchLossSink& sink) {
    cfg.validate();
    teacher.set_bn_mode(false);
    // gradients flow to the images only; flags are preset here so parallel
    // workers share a read-only teacher
    for (auto& p : teacher.trainable_parameters(true)) p.set_requires_grad(false);
    const auto chw = teacher.input_chw();
    const int classes = teacher.num_classes();
    const std::int64_t n_batches = (cfg.n_images + cfg.batch - 1) / cfg.batch;

    SynDataset data;
    data.images = Tensor::zeros({cfg.n_images, chw[0], chw[1], chw[2]});
    data.teacher_logits = Tensor::zeros({cfg.n_images, classes});
    data.teacher_hash = teacher_hash;
    data.config = cfg;

    const std::int64_t image_numel = chw[0] * chw[1] * chw[2];
    float* images_out = data.images.data();
    float* logits_out = data.teacher_logits.data();

    // batches are independent; sub-stream seed is seed ^ batch_index
    parallel_for(0, n_batches, [&](std::int64_t b) {
        const std::int64_t start = b * cfg.batch;
        const int count = static_cast<int>(std::min<std::int64_t>(cfg.batch, cfg.n_images - start));
        Rng rng(cfg.seed ^ static_cast<std::uint64_t>(b), rng_stream::kDream);
        IterLossSink batch_sink;
        if (sink)
            batch_sink = [&sink, b](const IterLossRow& row) { sink(static_cast<int>(b), row); };
        BatchResult result = synthesize_batch(teacher, cfg, count, rng, batch_sink);
        std::memcpy(images_out + start * image_numel, result.images.data(),
                    static_cast<std::size_t>(count * image_numel) * sizeof(float));
        std::memcpy(logits_out + start * classes, result.logits.data(),
                    static_cast<std::size_t>(count * classes) * sizeof(float));
    });
    return data;
}

std::vector<std::uint8_t> serialize_dfks(const SynDataset& data) {
    json header;
    header["count"] = data.images.shape()[0];
    header["channels"] = data.images.shape()[1];
    header["height"] = data.images.shape()[2];
    header["width"] = data.images.shape()[3];
    header["classes"] = data.teacher_logits.shape()[1];
    header["teacher_hash"] = data.teacher_hash;
    json cfg;
    cfg["n_images"] = data.config.n_images;
    cfg["batch"] = data.config.batch;
    cfg["iters"] = data.config.iters;
    cfg["lr"] = static_cast<double>(data.config.lr);
    cfg["lambda_bn"] = static_cast<double>(data.config.lambda_bn);
    cfg["lambda_tv"] = static_cast<double>(data.config.lambda_tv);
    cfg["jitter_max"] = data.config.jitter_max;
    cfg["target_mode"] = target_mode_name(data.config.target_mode);
    cfg["clamp_min"] = static_cast<double>(data.config.clamp_min);
    cfg["clamp_max"] = static_cast<double>(data.config.clamp_max);
    cfg["seed"] = data.config.seed;
    cfg["plain_sgd"] = data.config.plain_sgd;
    header["config"] = std::move(cfg);

    const std::string header_str = header.dump();
    std::vector<std::uint8_t> out;
    out.push_back('D');
    out.push_back('F');
    out.push_back('K');
    out.push_back('S');
    append_u32(out, kDfksVersion);
    append_u64(out, header_str.size());
    out.insert(out.end(), header_str.begin(), header_str.end());
    const auto* img = reinterpret_cast<const std::uint8_t*>(data.images.data());
    out.insert(out.end(), img, img + data.images.numel() * sizeof(float));
    const auto* lg = reinterpret_cast<const std::uint8_t*>(data.teacher_logits.data());
    out.insert(out.end(), lg, lg + data.teacher_logits.numel() * sizeof(float));
    return out;
}

void save_dfks(const SynDataset& data, const std::string& path) {
    write_file_bytes(path, serialize_dfks(data), /*cleanup_partial=*/true);
}

SynDataset load_dfks(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 16)
        throw FormatError("corrupt dfks file: truncated before header (offset " +
                          std::to_string(bytes.size()) + ")");
    if (std::memcmp(bytes.data(), "DFKS", 4) != 0)
        throw FormatError("corrupt dfks file: bad magic at offset 0");
    const std::uint32_t version = read_u32(bytes, 4);
    if (version != kDfksVersion)
        throw FormatError("unsupported dfks version " + std::to_string(version));
    const std::uint64_t header_len = read_u64(bytes, 8);
    if (16 + header_len > bytes.size())
        throw FormatError("corrupt dfks file: header extends past end of file");

    json header;
    try {
        header = json::parse(bytes.begin() + 16,
                             bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("corrupt dfks file: invalid JSON header: ") + e.what());
    }

    SynDataset data;
    const std::int64_t count = header.at("count").get<std::int64_t>();
    const std::int64_t c = header.at("channels").get<std::int64_t>();
    const std::int64_t h = header.at("height").get<std::int64_t>();
    const std::int64_t w = header.at("width").get<std::int64_t>();
    const std::int64_t k = header.at("classes").get<std::int64_t>();
    data.teacher_hash = header.at("teacher_hash").get<std::string>();
    const auto& cfg = header.at("config");
    data.config.n_images = cfg.at("n_images").get<std::int64_t>();
    data.config.batch = cfg.at("batch").get<int>();
    data.config.iters = cfg.at("iters").get<int>();
    data.config.lr = static_cast<float>(cfg.at("lr").get<double>());
    data.config.lambda_bn = static_cast<float>(cfg.at("lambda_bn").get<double>());
    data.config.lambda_tv = static_cast<float>(cfg.at("lambda_tv").get<double>());
    data.config.jitter_max = cfg.at("jitter_max").get<int>();
    data.config.target_mode = target_mode_from_name(cfg.at("target_mode").get<std::string>());
    data.config.clamp_min = static_cast<float>(cfg.at("clamp_min").get<double>());
    data.config.clamp_max = static_cast<float>(cfg.at("clamp_max").get<double>());
    data.config.seed = cfg.at("seed").get<std::uint64_t>();
    data.config.plain_sgd = cfg.at("plain_sgd").get<bool>();

    const std::size_t image_bytes = static_cast<std::size_t>(count * c * h * w) * sizeof(float);
    const std::size_t logit_bytes = static_cast<std::size_t>(count * k) * sizeof(float);
    std::size_t offset = 16 + header_len;
    if (offset + image_bytes + logit_bytes > bytes.size())
        throw FormatError("corrupt dfks file: truncated blobs at offset " +
                          std::to_string(offset));
    data.images = Tensor::zeros({count, c, h, w});
    std::memcpy(data.images.data(), bytes.data() + offset, image_bytes);
    offset += image_bytes;
    data.teacher_logits = Tensor::zeros({count, k});
    std::memcpy(data.teacher_logits.data(), bytes.data() + offset, logit_bytes);
    return data;
}

void dump_ppm(const SynDataset& data, const std::string& dir) {
    if (data.images.shape()[0] == 0) throw ContractError("dump_ppm: empty dataset");
    const std::int64_t n = data.images.shape()[0];
    const std::int64_t c = data.images.shape()[1];
    const std::int64_t h = data.images.shape()[2];
    const std::int64_t w = data.images.shape()[3];
    if (c != 1 && c != 3) throw ContractError("dump_ppm supports 1 or 3 channels");
    std::filesystem::create_directories(dir);

    const float* images = data.images.data();
    for (std::int64_t i = 0; i < n; ++i) {
        const float* img = images + i * c * h * w;
        float lo = img[0], hi = img[0];
        for (std::int64_t j = 1; j < c * h * w; ++j) {
            lo = std::min(lo, img[j]);
            hi = std::max(hi, img[j]);
        }
        const float scale = hi > lo ? 255.0f / (hi - lo) : 0.0f;

        std::string body = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
        std::vector<std::uint8_t> out(body.begin(), body.end());
        out.reserve(out.size() + static_cast<std::size_t>(3 * h * w));
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                for (int ch = 0; ch < 3; ++ch) {
                    const std::int64_t plane = (c == 3) ? ch : 0;
                    const float v = (img[plane * h * w + y * w + x] - lo) * scale;
                    const long byte = std::lround(v);
                    out.push_back(static_cast<std::uint8_t>(std::min(255l, std::max(0l, byte))));
                }
        char name[32];
        std::snprintf(name, sizeof(name), "img_%05lld.ppm", static_cast<long long>(i));
        write_file_bytes((std::filesystem::path(dir) / name).string(), out,
                         /*cleanup_partial=*/true);
    }
}

}  // namespace dfkd
