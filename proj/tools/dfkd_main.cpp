#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dfkd/pipeline.hpp"
#include "dfkd/threading.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string workdir;
    int threads = 1;
    std::optional<std::uint64_t> seed;
};

dfkd::RunConfig resolve_config(const CommonOpts& opts) {
    dfkd::RunConfig cfg;
    if (!opts.config_path.empty()) cfg = dfkd::RunConfig::from_file(opts.config_path);
    if (!opts.workdir.empty()) cfg.io.workdir = opts.workdir;
    if (opts.seed) cfg.set_seed(*opts.seed);
    dfkd::set_num_threads(opts.threads);
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "JSON run configuration");
    cmd->add_option("--out,--workdir", opts.workdir,
                    "Working directory (default: $DFKD_WORKDIR or dfkd_out)");
    cmd->add_option("--threads", opts.threads, "Worker thread cap (results are identical for any count)")
        ->default_val(1);
    cmd->add_option("--seed", opts.seed, "Override dataset/dream/distill seeds at once");
}

void print_eval(const char* tag, const dfkd::EvalReport& report) {
    std::printf("%s: top-1 accuracy %.4f (%lld samples)\n", tag, report.top1,
                static_cast<long long>(report.sample_count));
    const auto per_class = report.per_class_accuracy();
    for (std::size_t k = 0; k < per_class.size(); ++k)
        std::printf("  class %zu: %.4f (%lld/%lld)\n", k, per_class[k],
                    static_cast<long long>(report.per_class_correct[k]),
                    static_cast<long long>(report.per_class_total[k]));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Data-free recovery of pruned classifiers: global L1 pruning, "
                 "BN-statistics image synthesis, and knowledge distillation"};
    app.require_subcommand(1);

    CommonOpts opts;

    auto* cmd_train = app.add_subcommand(
        "train-teacher", "Train the dense teacher and save teacher.ckpt (defaults: 20 epochs, "
                         "lr 0.01, momentum 0.9, batch 64)");
    add_common(cmd_train, opts);

    auto* cmd_prune = app.add_subcommand(
        "prune", "Apply global L1 unstructured pruning to teacher.ckpt -> pruned.ckpt "
                 "(default amount 0.75)");
    add_common(cmd_prune, opts);
    float amount_override = -1.0f;
    cmd_prune->add_option("--amount", amount_override, "Fraction of weights to prune, in [0,1)");

    auto* cmd_dream = app.add_subcommand(
        "dream", "Synthesize the transfer set from teacher.ckpt -> dreams.dfks (defaults: "
                 "1024 images, 200 iters, lr 0.05, lambda_bn 10, lambda_tv 1e-5, jitter 2px); "
                 "takes no dataset");
    add_common(cmd_dream, opts);
    std::int64_t n_images_override = -1;
    cmd_dream->add_option("--n-images", n_images_override, "Number of images to synthesize");

    auto* cmd_distill = app.add_subcommand(
        "distill", "Distill pruned.ckpt on dreams.dfks -> recovered.ckpt (defaults: T 3.0, "
                   "alpha 1.0, 15 epochs, SGD lr 0.001 momentum 0.9, batch 32); takes no dataset");
    add_common(cmd_distill, opts);

    auto* cmd_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    add_common(cmd_eval, opts);
    std::string eval_ckpt;
    cmd_eval->add_option("--ckpt", eval_ckpt, "Checkpoint path (default: recovered.ckpt)");

    auto* cmd_pipeline = app.add_subcommand(
        "pipeline", "Run prune -> dream -> distill end to end with evaluation at every stage; "
                    "exit code 0 only if improvement > 0");
    add_common(cmd_pipeline, opts);

    CLI11_PARSE(app, argc, argv);

    try {
        dfkd::RunConfig cfg = resolve_config(opts);

        if (cmd_train->parsed()) {
            const auto report = dfkd::stage_train_teacher(cfg);
            print_eval("teacher", report);
        } else if (cmd_prune->parsed()) {
            if (amount_override >= 0.0f) cfg.prune.amount = amount_override;
            dfkd::stage_prune(cfg);
            std::printf("pruned checkpoint written (amount %.4f)\n",
                        static_cast<double>(cfg.prune.amount));
        } else if (cmd_dream->parsed()) {
            if (n_images_override > 0) cfg.dream.n_images = n_images_override;
            dfkd::stage_dream(cfg);
            std::printf("synthesized %lld images\n",
                        static_cast<long long>(cfg.dream.n_images));
        } else if (cmd_distill->parsed()) {
            dfkd::stage_distill(cfg);
            std::printf("recovered checkpoint written\n");
        } else if (cmd_eval->parsed()) {
            const dfkd::WorkPaths paths(cfg.resolved_workdir());
            const std::string ckpt = eval_ckpt.empty() ? paths.recovered_ckpt : eval_ckpt;
            const auto report = dfkd::stage_eval(cfg, ckpt);
            print_eval(ckpt.c_str(), report);
        } else if (cmd_pipeline->parsed()) {
            const auto result = dfkd::run_full_pipeline(cfg);
            std::printf("teacher %.4f -> pruned %.4f -> recovered %.4f (improvement %+.4f)\n",
                        result.ledger.teacher, result.ledger.pruned, result.ledger.recovered,
                        result.ledger.improvement);
            if (!(result.ledger.improvement > 0.0)) {
                std::fprintf(stderr, "recovery did not improve on the pruned model\n");
                return 2;
            }
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
