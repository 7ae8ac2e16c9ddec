#pragma once

#include <functional>

#include "dfkd/datasets.hpp"
#include "dfkd/model.hpp"

namespace dfkd {

struct TeacherConfig {
    int epochs = 20;
    float lr = 0.01f;
    float momentum = 0.9f;
    int batch = 64;

    void validate() const;
};

struct TrainLogRow {
    int epoch = 0;
    double mean_loss = 0.0;
};

using TrainLogSink = std::function<void(const TrainLogRow&)>;

// Supervised training with cross-entropy and SGD-momentum; BN runs in train
// mode so running statistics are accumulated. 0 epochs returns the
// initialization untouched.
void train_classifier(Model& model, const LabeledDataset& train, const TeacherConfig& cfg,
                      std::uint64_t seed, const TrainLogSink& sink = nullptr);

}  // namespace dfkd
