#include "dfkd/run_config.hpp"

#include <cstdlib>
#include <fstream>

#include "dfkd/error.hpp"

namespace dfkd {

using json = nlohmann::json;

namespace {

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& context) {
    if (!obj.is_object()) throw ConfigError("config section '" + context + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in config section '" + context + "'");
    }
}

template <typename T>
void get_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void get_if_f(const json& obj, const char* key, float& out) {
    if (obj.contains(key)) out = static_cast<float>(obj.at(key).get<double>());
}

}  // namespace

void DatasetConfig::validate() const {
    if (kind != "shapes" && kind != "cifar10")
        throw ConfigError("dataset.kind must be 'shapes' or 'cifar10', got '" + kind + "'");
    if (kind == "cifar10" && path.empty())
        throw ConfigError("dataset.path is required for cifar10");
    if (classes < 2) throw ConfigError("dataset.classes must be >= 2");
}

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"dataset", "teacher", "prune", "dream", "distill", "io"}, "<root>");
    RunConfig cfg;

    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        check_keys(d,
                   {"kind", "path", "classes", "image_size", "train_count", "test_count", "seed",
                    "cifar_mean", "cifar_std"},
                   "dataset");
        get_if(d, "kind", cfg.dataset.kind);
        get_if(d, "path", cfg.dataset.path);
        get_if(d, "classes", cfg.dataset.classes);
        get_if(d, "image_size", cfg.dataset.image_size);
        get_if(d, "train_count", cfg.dataset.train_count);
        get_if(d, "test_count", cfg.dataset.test_count);
        get_if(d, "seed", cfg.dataset.seed);
        // informational echo of the fixed standardization constants
        if (d.contains("cifar_mean") || d.contains("cifar_std")) {
            const std::array<float, 3> mean = {
                static_cast<float>(d.at("cifar_mean").at(0).get<double>()),
                static_cast<float>(d.at("cifar_mean").at(1).get<double>()),
                static_cast<float>(d.at("cifar_mean").at(2).get<double>())};
            const std::array<float, 3> std_dev = {
                static_cast<float>(d.at("cifar_std").at(0).get<double>()),
                static_cast<float>(d.at("cifar_std").at(1).get<double>()),
                static_cast<float>(d.at("cifar_std").at(2).get<double>())};
            if (mean != kCifarMean || std_dev != kCifarStd)
                throw ConfigError("dataset.cifar_mean/cifar_std are fixed constants and cannot "
                                  "be overridden");
        }
    }
    if (j.contains("teacher")) {
        const auto& t = j.at("teacher");
        check_keys(t, {"epochs", "lr", "momentum", "batch"}, "teacher");
        get_if(t, "epochs", cfg.teacher.epochs);
        get_if_f(t, "lr", cfg.teacher.lr);
        get_if_f(t, "momentum", cfg.teacher.momentum);
        get_if(t, "batch", cfg.teacher.batch);
    }
    if (j.contains("prune")) {
        const auto& p = j.at("prune");
        check_keys(p, {"amount"}, "prune");
        get_if_f(p, "amount", cfg.prune.amount);
    }
    if (j.contains("dream")) {
        const auto& d = j.at("dream");
        check_keys(d,
                   {"n_images", "batch", "iters", "lr", "lambda_bn", "lambda_tv", "jitter_max",
                    "target_mode", "clamp_min", "clamp_max", "seed", "plain_sgd"},
                   "dream");
        get_if(d, "n_images", cfg.dream.n_images);
        get_if(d, "batch", cfg.dream.batch);
        get_if(d, "iters", cfg.dream.iters);
        get_if_f(d, "lr", cfg.dream.lr);
        get_if_f(d, "lambda_bn", cfg.dream.lambda_bn);
        get_if_f(d, "lambda_tv", cfg.dream.lambda_tv);
        get_if(d, "jitter_max", cfg.dream.jitter_max);
        if (d.contains("target_mode"))
            cfg.dream.target_mode = target_mode_from_name(d.at("target_mode").get<std::string>());
        get_if_f(d, "clamp_min", cfg.dream.clamp_min);
        get_if_f(d, "clamp_max", cfg.dream.clamp_max);
        get_if(d, "seed", cfg.dream.seed);
        get_if(d, "plain_sgd", cfg.dream.plain_sgd);
    }
    if (j.contains("distill")) {
        const auto& d = j.at("distill");
        check_keys(d,
                   {"temperature", "alpha", "epochs", "batch", "lr", "momentum", "seed",
                    "strict_provenance"},
                   "distill");
        get_if_f(d, "temperature", cfg.distill.temperature);
        get_if_f(d, "alpha", cfg.distill.alpha);
        get_if(d, "epochs", cfg.distill.epochs);
        get_if(d, "batch", cfg.distill.batch);
        get_if_f(d, "lr", cfg.distill.lr);
        get_if_f(d, "momentum", cfg.distill.momentum);
        get_if(d, "seed", cfg.distill.seed);
        get_if(d, "strict_provenance", cfg.distill.strict_provenance);
    }
    if (j.contains("io")) {
        const auto& io = j.at("io");
        check_keys(io, {"workdir", "dump_ppm"}, "io");
        get_if(io, "workdir", cfg.io.workdir);
        get_if(io, "dump_ppm", cfg.io.dump_ppm);
    }

    cfg.dataset.validate();
    cfg.teacher.validate();
    if (!(cfg.prune.amount >= 0.0f && cfg.prune.amount < 1.0f))
        throw ConfigError("prune.amount must be in [0,1)");
    cfg.dream.validate();
    cfg.distill.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in config file '" + path + "': " + e.what());
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["dataset"]["kind"] = dataset.kind;
    j["dataset"]["path"] = dataset.path;
    j["dataset"]["classes"] = dataset.classes;
    j["dataset"]["image_size"] = dataset.image_size;
    j["dataset"]["train_count"] = dataset.train_count;
    j["dataset"]["test_count"] = dataset.test_count;
    j["dataset"]["seed"] = dataset.seed;
    if (dataset.kind == "cifar10") {
        j["dataset"]["cifar_mean"] = {kCifarMean[0], kCifarMean[1], kCifarMean[2]};
        j["dataset"]["cifar_std"] = {kCifarStd[0], kCifarStd[1], kCifarStd[2]};
    }
    j["teacher"]["epochs"] = teacher.epochs;
    j["teacher"]["lr"] = static_cast<double>(teacher.lr);
    j["teacher"]["momentum"] = static_cast<double>(teacher.momentum);
    j["teacher"]["batch"] = teacher.batch;
    j["prune"]["amount"] = static_cast<double>(prune.amount);
    j["dream"]["n_images"] = dream.n_images;
    j["dream"]["batch"] = dream.batch;
    j["dream"]["iters"] = dream.iters;
    j["dream"]["lr"] = static_cast<double>(dream.lr);
    j["dream"]["lambda_bn"] = static_cast<double>(dream.lambda_bn);
    j["dream"]["lambda_tv"] = static_cast<double>(dream.lambda_tv);
    j["dream"]["jitter_max"] = dream.jitter_max;
    j["dream"]["target_mode"] = target_mode_name(dream.target_mode);
    j["dream"]["clamp_min"] = static_cast<double>(dream.clamp_min);
    j["dream"]["clamp_max"] = static_cast<double>(dream.clamp_max);
    j["dream"]["seed"] = dream.seed;
    j["dream"]["plain_sgd"] = dream.plain_sgd;
    j["distill"]["temperature"] = static_cast<double>(distill.temperature);
    j["distill"]["alpha"] = static_cast<double>(distill.alpha);
    j["distill"]["epochs"] = distill.epochs;
    j["distill"]["batch"] = distill.batch;
    j["distill"]["lr"] = static_cast<double>(distill.lr);
    j["distill"]["momentum"] = static_cast<double>(distill.momentum);
    j["distill"]["seed"] = distill.seed;
    j["distill"]["strict_provenance"] = distill.strict_provenance;
    j["io"]["workdir"] = resolved_workdir();
    j["io"]["dump_ppm"] = io.dump_ppm;
    return j;
}

std::string RunConfig::resolved_workdir() const {
    if (!io.workdir.empty()) return io.workdir;
    if (const char* env = std::getenv("DFKD_WORKDIR"); env && *env) return env;
    return "dfkd_out";
}

void RunConfig::set_seed(std::uint64_t seed) {
    dataset.seed = seed;
    dream.seed = seed;
    distill.seed = seed;
}

}  // namespace dfkd
