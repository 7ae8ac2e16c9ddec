#include "dfkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "dfkd/error.hpp"
#include "dfkd/optim.hpp"

namespace dfkd {

void TeacherConfig::validate() const {
    if (epochs < 0) throw ConfigError("teacher epochs must be >= 0");
    if (!(lr > 0.0f)) throw ConfigError("teacher lr must be > 0");
    if (!(momentum >= 0.0f && momentum < 1.0f))
        throw ConfigError("teacher momentum must be in [0,1)");
    if (batch < 1) throw ConfigError("teacher batch must be >= 1");
}

void train_classifier(Model& model, const LabeledDataset& train, const TeacherConfig& cfg,
                      std::uint64_t seed, const TrainLogSink& sink) {
    cfg.validate();
    const std::int64_t n = train.size();
    if (n < 1) throw ContractError("train_classifier: empty dataset");

    model.set_bn_mode(true);
    auto params = model.trainable_parameters(/*include_bn_affine=*/true);
    for (auto& p : params) p.set_requires_grad(true);
    SgdMomentum opt(cfg.lr, cfg.momentum);
    Rng shuffle_rng(seed, rng_stream::kTeacherShuffle);

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const std::int64_t row = train.images.numel() / n;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::int64_t batches = 0;
        for (std::int64_t start = 0; start < n; start += cfg.batch) {
            const std::int64_t count = std::min<std::int64_t>(cfg.batch, n - start);
            Shape shape = train.images.shape();
            shape[0] = count;
            Tensor images = Tensor::zeros(shape);
            std::vector<int> labels(static_cast<std::size_t>(count));
            for (std::int64_t i = 0; i < count; ++i) {
                const std::int64_t src = order[static_cast<std::size_t>(start + i)];
                std::memcpy(images.data() + i * row, train.images.data() + src * row,
                            static_cast<std::size_t>(row) * sizeof(float));
                labels[static_cast<std::size_t>(i)] = train.labels[static_cast<std::size_t>(src)];
            }

            Tape tape;
            ForwardResult fw = model.forward(images, &tape);
            Tensor loss = ops::cross_entropy_with_labels(&tape, fw.logits, labels);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw DomainError("teacher training diverged at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batches));
            loss_sum += loss_val;
            ++batches;

            model.zero_grad();
            tape.backward(loss);
            opt.step(params);
        }
        if (sink) {
            TrainLogRow log_row;
            log_row.epoch = epoch;
            log_row.mean_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(batches, 1));
            sink(log_row);
        }
    }
    model.set_bn_mode(false);
}

}  // namespace dfkd
