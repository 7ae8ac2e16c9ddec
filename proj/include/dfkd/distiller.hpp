#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfkd/datasets.hpp"
#include "dfkd/dreamer.hpp"
#include "dfkd/model.hpp"
#include "dfkd/pruner.hpp"

namespace dfkd {

struct DistillConfig {
    float temperature = 3.0f;
    float alpha = 1.0f;
    int epochs = 15;
    int batch = 32;
    float lr = 0.001f;
    float momentum = 0.9f;
    std::uint64_t seed = 0;
    bool strict_provenance = false;  // hard-fail on teacher hash mismatch

    void validate() const;
};

// alpha * T^2 * KL( softmax(z_T/T) || softmax(z_S/T) ), batch mean, with the
// student probabilities floored at 1e-12 inside the log. z_T is a constant;
// gradient flows to z_S only. Zero exactly when z_S == z_T.
Tensor kd_loss(Tape* tape, const Tensor& student_logits, const Tensor& teacher_logits,
               float temperature, float alpha);

struct DistillLogRow {
    int epoch = 0;
    double mean_kd_loss = 0.0;
    double eval_accuracy = -1.0;  // < 0 when no eval set was supplied
};

using DistillLogSink = std::function<void(const DistillLogRow&)>;

// Trains the pruned student on the synthetic transfer set against the cached
// teacher logits. All student BN layers run in eval mode (running statistics
// frozen); the mask is re-applied after every optimizer step so pruned
// positions stay exactly 0. Only conv/linear weights and biases are updated.
void distill(Model& student, const MaskSet& mask, const Model& teacher,
             const SynDataset& data, const DistillConfig& cfg,
             const LabeledDataset* eval_set = nullptr,
             const DistillLogSink& sink = nullptr,
             std::vector<std::string>* warnings = nullptr);

struct EvalReport {
    double top1 = 0.0;
    std::vector<std::int64_t> per_class_correct;
    std::vector<std::int64_t> per_class_total;
    std::int64_t sample_count = 0;

    std::vector<double> per_class_accuracy() const;
};

// Top-1 accuracy with argmax ties resolved to the lowest index.
EvalReport evaluate(Model& model, const LabeledDataset& data, int batch = 256);

struct LedgerRow {
    std::string model;
    double teacher = 0.0;    // fractions in [0,1]
    double pruned = 0.0;
    double recovered = 0.0;
    double improvement = 0.0;
};

LedgerRow accuracy_ledger(const std::string& model_name, const EvalReport& teacher,
                          const EvalReport& pruned, const EvalReport& recovered);

// CSV with accuracies in percent (two decimals), one row per model.
std::string ledger_csv(const std::vector<LedgerRow>& rows);

}  // namespace dfkd
