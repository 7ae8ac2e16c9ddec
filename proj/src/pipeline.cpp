#include "dfkd/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>

#include "dfkd/error.hpp"
#include "dfkd/util.hpp"

namespace dfkd {

namespace fs = std::filesystem;

WorkPaths::WorkPaths(const std::string& wd) : workdir(wd) {
    teacher_ckpt = (fs::path(wd) / "teacher.ckpt").string();
    pruned_ckpt = (fs::path(wd) / "pruned.ckpt").string();
    dreams = (fs::path(wd) / "dreams.dfks").string();
    recovered_ckpt = (fs::path(wd) / "recovered.ckpt").string();
    ledger = (fs::path(wd) / "ledger.csv").string();
    config_echo = (fs::path(wd) / "config.resolved.json").string();
    logs_dir = (fs::path(wd) / "logs").string();
    ppm_dir = (fs::path(wd) / "dreams_ppm").string();
}

WorkPaths prepare_workdir(const RunConfig& cfg) {
    WorkPaths paths(cfg.resolved_workdir());
    fs::create_directories(paths.logs_dir);
    const std::string echo = cfg.to_json().dump(2) + "\n";
    write_file_bytes(paths.config_echo, std::vector<std::uint8_t>(echo.begin(), echo.end()));
    return paths;
}

DatasetPair load_dataset(const DatasetConfig& cfg) {
    cfg.validate();
    DatasetPair pair;
    if (cfg.kind == "shapes") {
        ShapesConfig scfg;
        scfg.classes = cfg.classes;
        scfg.image_size = cfg.image_size;
        scfg.train_count = cfg.train_count;
        scfg.test_count = cfg.test_count;
        scfg.seed = cfg.seed;
        ShapesData data = generate_shapes(scfg);
        pair.train = std::move(data.train);
        pair.test = std::move(data.test);
    } else {
        Cifar10Data data = load_cifar10_binary(cfg.path);
        pair.train = std::move(data.train);
        pair.test = std::move(data.test);
    }
    return pair;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
    write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

int dataset_channels(const DatasetConfig&) { return 3; }

int dataset_image_size(const DatasetConfig& cfg) {
    return cfg.kind == "cifar10" ? 32 : cfg.image_size;
}

int dataset_classes(const DatasetConfig& cfg) {
    return cfg.kind == "cifar10" ? 10 : cfg.classes;
}

}  // namespace

EvalReport stage_train_teacher(const RunConfig& cfg) {
    const WorkPaths paths = prepare_workdir(cfg);
    DatasetPair data = load_dataset(cfg.dataset);

    Model teacher = make_tinynet(dataset_channels(cfg.dataset), dataset_image_size(cfg.dataset),
                                 dataset_classes(cfg.dataset), cfg.dataset.seed);
    std::ostringstream log;
    log << "epoch,mean_loss\n";
    train_classifier(teacher, data.train, cfg.teacher, cfg.dataset.seed,
                     [&](const TrainLogRow& row) {
                         char buf[64];
                         std::snprintf(buf, sizeof(buf), "%d,%.6f\n", row.epoch, row.mean_loss);
                         log << buf;
                     });
    save_checkpoint(teacher, nullptr, paths.teacher_ckpt);
    write_text((fs::path(paths.logs_dir) / "teacher_train.csv").string(), log.str());
    return evaluate(teacher, data.test);
}

void stage_prune(const RunConfig& cfg) {
    const WorkPaths paths = prepare_workdir(cfg);
    Checkpoint ckpt = load_checkpoint(paths.teacher_ckpt);
    MaskSet mask = compute_mask(ckpt.model, cfg.prune.amount);
    apply_mask(ckpt.model, mask);
    save_checkpoint(ckpt.model, &mask, paths.pruned_ckpt);
    write_text((fs::path(paths.logs_dir) / "sparsity.csv").string(),
               sparsity_csv(sparsity_report(ckpt.model, &mask)));
}

void stage_dream(const RunConfig& cfg) {
    const WorkPaths paths = prepare_workdir(cfg);
    const auto teacher_bytes = read_file_bytes(paths.teacher_ckpt);
    const std::string teacher_hash = to_hex(fnv1a64(teacher_bytes.data(), teacher_bytes.size()));
    Checkpoint ckpt = deserialize_checkpoint(teacher_bytes);

    const std::int64_t n_batches =
        (cfg.dream.n_images + cfg.dream.batch - 1) / cfg.dream.batch;
    std::vector<std::vector<IterLossRow>> logs(static_cast<std::size_t>(n_batches));
    SynDataset dreams = generate_dataset(
        ckpt.model, cfg.dream, teacher_hash,
        [&](int batch, const IterLossRow& row) {
            logs[static_cast<std::size_t>(batch)].push_back(row);
        });
    save_dfks(dreams, paths.dreams);

    for (std::size_t b = 0; b < logs.size(); ++b) {
        std::ostringstream os;
        os << "iter,entropy,bn,tv,total\n";
        for (const auto& row : logs[b]) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g,%.6g\n", row.iter, row.entropy,
                          row.bn, row.tv, row.total);
            os << buf;
        }
        char name[48];
        std::snprintf(name, sizeof(name), "dream_batch_%03zu.csv", b);
        write_text((fs::path(paths.logs_dir) / name).string(), os.str());
    }
    if (cfg.io.dump_ppm) dump_ppm(dreams, paths.ppm_dir);
}

void stage_distill(const RunConfig& cfg) {
    const WorkPaths paths = prepare_workdir(cfg);
    Checkpoint pruned = load_checkpoint(paths.pruned_ckpt);
    if (!pruned.mask)
        throw ContractError("pruned checkpoint '" + paths.pruned_ckpt + "' carries no mask");
    Checkpoint teacher = load_checkpoint(paths.teacher_ckpt);
    SynDataset dreams = load_dfks(paths.dreams);

    std::ostringstream log;
    log << "epoch,mean_kd_loss,eval_accuracy\n";
    std::vector<std::string> warnings;
    distill(pruned.model, *pruned.mask, teacher.model, dreams, cfg.distill,
            /*eval_set=*/nullptr,
            [&](const DistillLogRow& row) {
                char buf[96];
                if (row.eval_accuracy >= 0.0)
                    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.4f\n", row.epoch,
                                  row.mean_kd_loss, row.eval_accuracy);
                else
                    std::snprintf(buf, sizeof(buf), "%d,%.6f,\n", row.epoch, row.mean_kd_loss);
                log << buf;
            },
            &warnings);
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    save_checkpoint(pruned.model, &*pruned.mask, paths.recovered_ckpt);
    write_text((fs::path(paths.logs_dir) / "distill.csv").string(), log.str());
}

EvalReport stage_eval(const RunConfig& cfg, const std::string& ckpt_path) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    DatasetPair data = load_dataset(cfg.dataset);
    return evaluate(ckpt.model, data.test);
}

PipelineResult run_full_pipeline(const RunConfig& cfg) {
    const WorkPaths paths = prepare_workdir(cfg);
    const EvalReport teacher_report = stage_train_teacher(cfg);

    // the real training set is not consulted past this point
    DatasetPair data = load_dataset(cfg.dataset);
    stage_prune(cfg);
    Checkpoint pruned = load_checkpoint(paths.pruned_ckpt);
    const EvalReport pruned_report = evaluate(pruned.model, data.test);

    stage_dream(cfg);
    stage_distill(cfg);
    Checkpoint recovered = load_checkpoint(paths.recovered_ckpt);
    const EvalReport recovered_report = evaluate(recovered.model, data.test);

    PipelineResult result;
    result.ledger = accuracy_ledger("tinynet", teacher_report, pruned_report, recovered_report);
    write_text(paths.ledger, ledger_csv({result.ledger}));
    return result;
}

}  // namespace dfkd
