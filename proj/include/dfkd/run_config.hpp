#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "dfkd/datasets.hpp"
#include "dfkd/distiller.hpp"
#include "dfkd/dreamer.hpp"
#include "dfkd/trainer.hpp"

namespace dfkd {

// JSON run configuration. Unknown keys are rejected at every level; every
// field has a default; the fully-resolved config is echoed to the workdir.

struct DatasetConfig {
    std::string kind = "shapes";  // shapes | cifar10
    std::string path;             // cifar10 binary directory
    int classes = 4;
    int image_size = 16;
    std::int64_t train_count = 2000;
    std::int64_t test_count = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct PruneSection {
    float amount = 0.75f;
};

struct IoConfig {
    std::string workdir;  // default: $DFKD_WORKDIR or "dfkd_out"
    bool dump_ppm = false;
};

struct RunConfig {
    DatasetConfig dataset;
    TeacherConfig teacher;
    PruneSection prune;
    SynthesisConfig dream;
    DistillConfig distill;
    IoConfig io;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);

    nlohmann::json to_json() const;  // fully resolved
    std::string resolved_workdir() const;

    // Sets dataset/dream/distill seeds at once (CLI --seed).
    void set_seed(std::uint64_t seed);
};

}  // namespace dfkd
