#include "dfkd/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>

#include "dfkd/checkpoint.hpp"
#include "dfkd/error.hpp"
#include "dfkd/optim.hpp"
#include "dfkd/util.hpp"

namespace dfkd {

void DistillConfig::validate() const {
    if (!(temperature > 0.0f)) throw ConfigError("distill temperature must be > 0");
    if (!(alpha > 0.0f && alpha <= 1.0f)) throw ConfigError("distill alpha must be in (0,1]");
    if (epochs < 1) throw ConfigError("distill epochs must be >= 1");
    if (batch < 1) throw ConfigError("distill batch must be >= 1");
    if (!(lr > 0.0f)) throw ConfigError("distill lr must be > 0");
    if (!(momentum >= 0.0f && momentum < 1.0f))
        throw ConfigError("distill momentum must be in [0,1)");
}

Tensor kd_loss(Tape* tape, const Tensor& student_logits, const Tensor& teacher_logits,
               float temperature, float alpha) {
    if (student_logits.dim() != 2 || teacher_logits.dim() != 2 ||
        student_logits.shape() != teacher_logits.shape())
        throw ContractError("kd_loss logits shapes must match, got " +
                            shape_str(student_logits.shape()) + " vs " +
                            shape_str(teacher_logits.shape()));
    if (!(temperature > 0.0f)) throw ConfigError("kd_loss temperature must be > 0");
    const std::int64_t n = student_logits.shape()[0];
    const std::int64_t k = student_logits.shape()[1];

    auto softmax_rows = [&](const float* z, std::vector<float>& p) {
        for (std::int64_t i = 0; i < n; ++i) {
            const float* zi = z + i * k;
            float* pi = p.data() + i * k;
            float mx = -std::numeric_limits<float>::infinity();
            for (std::int64_t j = 0; j < k; ++j) mx = std::max(mx, zi[j] / temperature);
            double sum = 0.0;
            for (std::int64_t j = 0; j < k; ++j) {
                pi[j] = std::exp(zi[j] / temperature - mx);
                sum += pi[j];
            }
            const float inv = static_cast<float>(1.0 / sum);
            for (std::int64_t j = 0; j < k; ++j) pi[j] *= inv;
        }
    };

    auto p_teacher = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n * k));
    auto p_student = std::make_shared<std::vector<float>>(static_cast<std::size_t>(n * k));
    softmax_rows(teacher_logits.data(), *p_teacher);
    softmax_rows(student_logits.data(), *p_student);

    double acc = 0.0;
    for (std::int64_t i = 0; i < n * k; ++i) {
        const float pt = (*p_teacher)[static_cast<std::size_t>(i)];
        if (pt <= 0.0f) continue;  // 0 log 0 := 0
        const float ps = std::max((*p_student)[static_cast<std::size_t>(i)], 1e-12f);
        const float ptc = std::max(pt, 1e-12f);
        acc += static_cast<double>(pt) * (std::log(ptc) - std::log(ps));
    }
    const float scale = alpha * temperature * temperature / static_cast<float>(n);
    Tensor out = Tensor::scalar(static_cast<float>(acc) * scale);

    if (tape && student_logits.requires_grad()) {
        out.set_requires_grad(true);
        Tensor zin = student_logits, o = out;
        tape->record(out, [zin, o, p_teacher, p_student, n, k, temperature, alpha]() mutable {
            const float g = o.grad()[0];
            // d/dz_S of T^2*KL is T*(p_S - p_T); batch mean adds 1/N
            const float scale = g * alpha * temperature / static_cast<float>(n);
            std::vector<float> gz(static_cast<std::size_t>(n * k));
            for (std::int64_t i = 0; i < n * k; ++i)
                gz[static_cast<std::size_t>(i)] =
                    scale * ((*p_student)[static_cast<std::size_t>(i)] -
                             (*p_teacher)[static_cast<std::size_t>(i)]);
            zin.accumulate_grad(gz.data(), n * k);
        });
    }
    return out;
}

namespace {

Tensor gather_rows(const Tensor& src, const std::vector<std::int64_t>& indices,
                   std::int64_t start, std::int64_t count) {
    const std::int64_t row = src.numel() / src.shape()[0];
    Shape shape = src.shape();
    shape[0] = count;
    Tensor out = Tensor::zeros(shape);
    for (std::int64_t i = 0; i < count; ++i)
        std::memcpy(out.data() + i * row, src.data() + indices[static_cast<std::size_t>(start + i)] * row,
                    static_cast<std::size_t>(row) * sizeof(float));
    return out;
}

std::string bn_running_hash(const Model& model) {
    std::vector<std::uint8_t> bytes;
    for (const auto& layer : model.layers) {
        if (layer.spec.kind != LayerKind::batchnorm2d) continue;
        for (const Tensor* t : {&layer.running_mean, &layer.running_var, &layer.num_batches}) {
            const auto* p = reinterpret_cast<const std::uint8_t*>(t->data());
            bytes.insert(bytes.end(), p, p + t->numel() * sizeof(float));
        }
    }
    return to_hex(fnv1a64(bytes.data(), bytes.size()));
}

}  // namespace

void distill(Model& student, const MaskSet& mask, const Model& teacher,
             const SynDataset& data, const DistillConfig& cfg,
             const LabeledDataset* eval_set, const DistillLogSink& sink,
             std::vector<std::string>* warnings) {
    cfg.validate();
    if (!data.teacher_hash.empty()) {
        const std::string actual = model_hash(teacher);
        if (actual != data.teacher_hash) {
            const std::string msg = "transfer set was synthesized from teacher " +
                                    data.teacher_hash + " but got teacher " + actual;
            if (cfg.strict_provenance) throw DataError(msg);
            if (warnings) warnings->push_back(msg);
        }
    }

    const std::int64_t n = data.images.shape()[0];
    if (n < 1) throw ContractError("distill: empty transfer set");
    student.set_bn_mode(false);  // BN frozen throughout
    const std::string bn_hash_before = bn_running_hash(student);

    // only conv/linear weights update; BN affine stays frozen with the stats
    auto params = student.trainable_parameters(/*include_bn_affine=*/false);
    for (auto& p : params) p.set_requires_grad(true);
    for (auto& layer : student.layers) {
        if (layer.spec.kind != LayerKind::batchnorm2d) continue;
        layer.gamma.set_requires_grad(false);
        layer.beta.set_requires_grad(false);
    }
    SgdMomentum opt(cfg.lr, cfg.momentum);
    Rng shuffle_rng(cfg.seed, rng_stream::kDistillShuffle);

    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        std::int64_t batches = 0;
        for (std::int64_t start = 0; start < n; start += cfg.batch) {
            const std::int64_t count = std::min<std::int64_t>(cfg.batch, n - start);
            Tensor images = gather_rows(data.images, order, start, count);
            Tensor targets = gather_rows(data.teacher_logits, order, start, count);

            Tape tape;
            ForwardResult fw = student.forward(images, &tape);
            Tensor loss = kd_loss(&tape, fw.logits, targets, cfg.temperature, cfg.alpha);
            const double loss_val = loss.item();
            if (!std::isfinite(loss_val))
                throw DomainError("distillation diverged at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(batches));
            loss_sum += loss_val;
            ++batches;

            student.zero_grad();
            tape.backward(loss);
            opt.step(params);
            apply_mask(student, mask);  // pruned positions stay exactly 0
        }

        DistillLogRow row;
        row.epoch = epoch;
        row.mean_kd_loss = loss_sum / static_cast<double>(std::max<std::int64_t>(batches, 1));
        if (eval_set) row.eval_accuracy = evaluate(student, *eval_set).top1;
        if (sink) sink(row);
    }

    if (bn_running_hash(student) != bn_hash_before)
        throw ContractError("distill mutated frozen BN running statistics");
}

std::vector<double> EvalReport::per_class_accuracy() const {
    std::vector<double> acc(per_class_total.size(), 0.0);
    for (std::size_t i = 0; i < per_class_total.size(); ++i)
        if (per_class_total[i] > 0)
            acc[i] = static_cast<double>(per_class_correct[i]) /
                     static_cast<double>(per_class_total[i]);
    return acc;
}

EvalReport evaluate(Model& model, const LabeledDataset& data, int batch) {
    const std::int64_t n = data.size();
    if (n < 1) throw ContractError("evaluate: empty dataset");
    const int classes = model.num_classes();
    model.set_bn_mode(false);

    EvalReport report;
    report.sample_count = n;
    report.per_class_correct.assign(static_cast<std::size_t>(classes), 0);
    report.per_class_total.assign(static_cast<std::size_t>(classes), 0);

    const std::int64_t row = data.images.numel() / n;
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < n; start += batch) {
        const std::int64_t count = std::min<std::int64_t>(batch, n - start);
        Shape shape = data.images.shape();
        shape[0] = count;
        Tensor chunk = Tensor::zeros(shape);
        std::memcpy(chunk.data(), data.images.data() + start * row,
                    static_cast<std::size_t>(count * row) * sizeof(float));
        Tensor logits = model.forward(chunk, nullptr).logits;
        const float* z = logits.data();
        for (std::int64_t i = 0; i < count; ++i) {
            int best = 0;
            for (int j = 1; j < classes; ++j)
                if (z[i * classes + j] > z[i * classes + best]) best = j;
            const int label = data.labels[static_cast<std::size_t>(start + i)];
            if (label < 0 || label >= classes)
                throw DataError("evaluate: label " + std::to_string(label) + " out of range");
            ++report.per_class_total[static_cast<std::size_t>(label)];
            if (best == label) {
                ++correct;
                ++report.per_class_correct[static_cast<std::size_t>(label)];
            }
        }
    }
    report.top1 = static_cast<double>(correct) / static_cast<double>(n);
    return report;
}

LedgerRow accuracy_ledger(const std::string& model_name, const EvalReport& teacher,
                          const EvalReport& pruned, const EvalReport& recovered) {
    LedgerRow row;
    row.model = model_name;
    row.teacher = teacher.top1;
    row.pruned = pruned.top1;
    row.recovered = recovered.top1;
    row.improvement = recovered.top1 - pruned.top1;
    return row;
}

std::string ledger_csv(const std::vector<LedgerRow>& rows) {
    std::ostringstream os;
    os << "model,teacher,pruned,recovered,improvement\n";
    for (const auto& row : rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.2f,%.2f\n", row.model.c_str(),
                      row.teacher * 100.0, row.pruned * 100.0, row.recovered * 100.0,
                      row.improvement * 100.0);
        os << buf;
    }
    return os.str();
}

}  // namespace dfkd
