#pragma once

#include <string>

#include "dfkd/checkpoint.hpp"
#include "dfkd/distiller.hpp"
#include "dfkd/run_config.hpp"

namespace dfkd {

// Fixed workdir layout shared by the CLI stages.
struct WorkPaths {
    explicit WorkPaths(const std::string& workdir);
    std::string workdir;
    std::string teacher_ckpt;
    std::string pruned_ckpt;
    std::string dreams;
    std::string recovered_ckpt;
    std::string ledger;
    std::string config_echo;
    std::string logs_dir;
    std::string ppm_dir;
};

// Creates workdir + logs/ and writes the fully-resolved config echo.
WorkPaths prepare_workdir(const RunConfig& cfg);

// Train/test splits for the configured dataset kind.
struct DatasetPair {
    LabeledDataset train;
    LabeledDataset test;
};
DatasetPair load_dataset(const DatasetConfig& cfg);

// Each stage consumes and produces files only, so stages can be rerun
// independently. Neither dream nor distill touches the dataset section.
EvalReport stage_train_teacher(const RunConfig& cfg);
void stage_prune(const RunConfig& cfg);
void stage_dream(const RunConfig& cfg);
void stage_distill(const RunConfig& cfg);
EvalReport stage_eval(const RunConfig& cfg, const std::string& ckpt_path);

struct PipelineResult {
    LedgerRow ledger;
};

// Algorithm flow end to end: train teacher, prune, synthesize, distill,
// evaluate at the three stages, write ledger.csv.
PipelineResult run_full_pipeline(const RunConfig& cfg);

}  // namespace dfkd
