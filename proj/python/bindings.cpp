#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dfkd/checkpoint.hpp"
#include "dfkd/datasets.hpp"
#include "dfkd/error.hpp"
#include "dfkd/distiller.hpp"
#include "dfkd/dreamer.hpp"
#include "dfkd/pipeline.hpp"
#include "dfkd/pruner.hpp"
#include "dfkd/threading.hpp"
#include "dfkd/trainer.hpp"

namespace py = pybind11;
using namespace dfkd;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const FloatArray& array) {
    Shape shape(array.ndim());
    for (py::ssize_t d = 0; d < array.ndim(); ++d)
        shape[static_cast<std::size_t>(d)] = array.shape(d);
    std::vector<float> data(array.data(), array.data() + array.size());
    return Tensor::from_vector(std::move(shape), std::move(data));
}

py::array_t<float> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<float> out(shape);
    std::memcpy(out.mutable_data(), t.data(),
                static_cast<std::size_t>(t.numel()) * sizeof(float));
    return out;
}

LabeledDataset dataset_from_arrays(const FloatArray& images, const std::vector<int>& labels,
                                   int num_classes) {
    LabeledDataset data;
    data.images = tensor_from_array(images);
    data.labels = labels;
    data.num_classes = num_classes;
    return data;
}

SynthesisConfig synthesis_config(std::int64_t n_images, int batch, int iters, float lr,
                                 float lambda_bn, float lambda_tv, int jitter_max,
                                 const std::string& target_mode, float clamp_min,
                                 float clamp_max, std::uint64_t seed, bool plain_sgd) {
    SynthesisConfig cfg;
    cfg.n_images = n_images;
    cfg.batch = batch;
    cfg.iters = iters;
    cfg.lr = lr;
    cfg.lambda_bn = lambda_bn;
    cfg.lambda_tv = lambda_tv;
    cfg.jitter_max = jitter_max;
    cfg.target_mode = target_mode_from_name(target_mode);
    cfg.clamp_min = clamp_min;
    cfg.clamp_max = clamp_max;
    cfg.seed = seed;
    cfg.plain_sgd = plain_sgd;
    return cfg;
}

py::dict eval_dict(const EvalReport& report) {
    py::dict out;
    out["top1"] = report.top1;
    out["sample_count"] = report.sample_count;
    out["per_class_accuracy"] = report.per_class_accuracy();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Data-free recovery of pruned classifiers: global L1 pruning, BN-statistics "
              "image synthesis, and knowledge distillation";

    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<DomainError>(m, "DomainError");
    py::register_exception<ContractError>(m, "ContractError");
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<FormatError>(m, "FormatError");

    py::class_<Model>(m, "Model")
        .def("forward",
             [](Model& model, const FloatArray& images) {
                 return array_from_tensor(model.forward(tensor_from_array(images), nullptr).logits);
             },
             py::arg("images"), "Eval-mode logits for a [N,C,H,W] batch")
        .def("bn_batch_stats",
             [](Model& model, const FloatArray& images) {
                 auto fw = model.forward(tensor_from_array(images), nullptr);
                 py::list out;
                 for (const auto& s : fw.bn_stats)
                     out.append(py::make_tuple(array_from_tensor(s.mean),
                                               array_from_tensor(s.var)));
                 return out;
             },
             py::arg("images"), "Per-BN-layer (batch_mean, batch_var) pairs")
        .def_property_readonly("num_classes", &Model::num_classes)
        .def_property_readonly("input_chw",
                               [](const Model& model) {
                                   const auto& chw = model.input_chw();
                                   return py::make_tuple(chw[0], chw[1], chw[2]);
                               })
        .def_property_readonly("hash", &model_hash);

    py::class_<MaskSet>(m, "MaskSet")
        .def_property_readonly("threshold", [](const MaskSet& m_) { return m_.threshold; })
        .def_property_readonly("total_elements", &MaskSet::total_elements)
        .def_property_readonly("pruned_elements", &MaskSet::pruned_elements);

    m.def("set_num_threads", &set_num_threads, py::arg("n"));

    m.def("make_tinynet", &make_tinynet, py::arg("in_channels") = 3,
          py::arg("image_size") = 16, py::arg("num_classes") = 4, py::arg("seed") = 0);

    m.def("save_checkpoint",
          [](const Model& model, const std::string& path, const MaskSet* mask) {
              save_checkpoint(model, mask, path);
          },
          py::arg("model"), py::arg("path"), py::arg("mask") = nullptr);

    m.def("load_checkpoint", [](const std::string& path) {
        Checkpoint ckpt = load_checkpoint(path);
        py::object mask = ckpt.mask ? py::cast(*ckpt.mask) : py::none();
        return py::make_tuple(std::move(ckpt.model), std::move(mask));
    });

    m.def("generate_shapes",
          [](int classes, int image_size, std::int64_t train_count, std::int64_t test_count,
             std::uint64_t seed) {
              ShapesConfig cfg;
              cfg.classes = classes;
              cfg.image_size = image_size;
              cfg.train_count = train_count;
              cfg.test_count = test_count;
              cfg.seed = seed;
              ShapesData data = generate_shapes(cfg);
              py::dict out;
              out["train_images"] = array_from_tensor(data.train.images);
              out["train_labels"] = data.train.labels;
              out["test_images"] = array_from_tensor(data.test.images);
              out["test_labels"] = data.test.labels;
              out["channel_mean"] = data.channel_mean;
              out["channel_std"] = data.channel_std;
              return out;
          },
          py::arg("classes") = 4, py::arg("image_size") = 16, py::arg("train_count") = 2000,
          py::arg("test_count") = 1000, py::arg("seed") = 0);

    m.def("train_classifier",
          [](Model& model, const FloatArray& images, const std::vector<int>& labels,
             int epochs, float lr, float momentum, int batch, std::uint64_t seed) {
              TeacherConfig cfg;
              cfg.epochs = epochs;
              cfg.lr = lr;
              cfg.momentum = momentum;
              cfg.batch = batch;
              train_classifier(model, dataset_from_arrays(images, labels, model.num_classes()),
                               cfg, seed);
          },
          py::arg("model"), py::arg("images"), py::arg("labels"), py::arg("epochs") = 20,
          py::arg("lr") = 0.01f, py::arg("momentum") = 0.9f, py::arg("batch") = 64,
          py::arg("seed") = 0);

    m.def("evaluate",
          [](Model& model, const FloatArray& images, const std::vector<int>& labels) {
              return eval_dict(
                  evaluate(model, dataset_from_arrays(images, labels, model.num_classes())));
          },
          py::arg("model"), py::arg("images"), py::arg("labels"));

    m.def("global_l1_threshold", &global_l1_threshold, py::arg("model"), py::arg("amount"));
    m.def("compute_mask", &compute_mask, py::arg("model"), py::arg("amount"));
    m.def("apply_mask", &apply_mask, py::arg("model"), py::arg("mask"));
    m.def("sparsity_report",
          [](const Model& model, const MaskSet* mask) {
              py::list out;
              for (const auto& row : sparsity_report(model, mask))
                  out.append(py::make_tuple(row.layer, row.total, row.zeros, row.fraction));
              return out;
          },
          py::arg("model"), py::arg("mask") = nullptr);

    m.def("entropy_loss",
          [](const FloatArray& probs) {
              return entropy_loss(nullptr, tensor_from_array(probs)).item();
          },
          py::arg("probs"));
    m.def("tv_loss",
          [](const FloatArray& images) {
              return ops::tv_loss(nullptr, tensor_from_array(images)).item();
          },
          py::arg("images"));
    m.def("kd_loss",
          [](const FloatArray& student_logits, const FloatArray& teacher_logits,
             float temperature, float alpha) {
              return kd_loss(nullptr, tensor_from_array(student_logits),
                             tensor_from_array(teacher_logits), temperature, alpha)
                  .item();
          },
          py::arg("student_logits"), py::arg("teacher_logits"), py::arg("temperature") = 3.0f,
          py::arg("alpha") = 1.0f);
    m.def("softmax",
          [](const FloatArray& logits, float temperature) {
              return array_from_tensor(
                  ops::softmax(nullptr, tensor_from_array(logits), temperature));
          },
          py::arg("logits"), py::arg("temperature") = 1.0f);

    m.def("synthesize",
          [](Model& teacher, std::int64_t n_images, int batch, int iters, float lr,
             float lambda_bn, float lambda_tv, int jitter_max, const std::string& target_mode,
             float clamp_min, float clamp_max, std::uint64_t seed, bool plain_sgd) {
              SynDataset data = generate_dataset(
                  teacher,
                  synthesis_config(n_images, batch, iters, lr, lambda_bn, lambda_tv,
                                   jitter_max, target_mode, clamp_min, clamp_max, seed,
                                   plain_sgd),
                  model_hash(teacher));
              return py::make_tuple(array_from_tensor(data.images),
                                    array_from_tensor(data.teacher_logits));
          },
          py::arg("teacher"), py::arg("n_images") = 1024, py::arg("batch") = 64,
          py::arg("iters") = 200, py::arg("lr") = 0.05f, py::arg("lambda_bn") = 10.0f,
          py::arg("lambda_tv") = 1e-5f, py::arg("jitter_max") = 2,
          py::arg("target_mode") = "entropy", py::arg("clamp_min") = -3.0f,
          py::arg("clamp_max") = 3.0f, py::arg("seed") = 0, py::arg("plain_sgd") = false);

    m.def("distill",
          [](Model& student, const MaskSet& mask, const Model& teacher,
             const FloatArray& images, const FloatArray& teacher_logits, float temperature,
             float alpha, int epochs, int batch, float lr, float momentum, std::uint64_t seed,
             bool strict_provenance) {
              SynDataset data;
              data.images = tensor_from_array(images);
              data.teacher_logits = tensor_from_array(teacher_logits);
              data.teacher_hash = model_hash(teacher);
              DistillConfig cfg;
              cfg.temperature = temperature;
              cfg.alpha = alpha;
              cfg.epochs = epochs;
              cfg.batch = batch;
              cfg.lr = lr;
              cfg.momentum = momentum;
              cfg.seed = seed;
              cfg.strict_provenance = strict_provenance;
              distill(student, mask, teacher, data, cfg);
          },
          py::arg("student"), py::arg("mask"), py::arg("teacher"), py::arg("images"),
          py::arg("teacher_logits"), py::arg("temperature") = 3.0f, py::arg("alpha") = 1.0f,
          py::arg("epochs") = 15, py::arg("batch") = 32, py::arg("lr") = 0.001f,
          py::arg("momentum") = 0.9f, py::arg("seed") = 0,
          py::arg("strict_provenance") = false);

    m.def("run_pipeline",
          [](const std::string& config_json, const std::string& workdir) {
              RunConfig cfg = config_json.empty()
                                  ? RunConfig()
                                  : RunConfig::from_json(nlohmann::json::parse(config_json));
              if (!workdir.empty()) cfg.io.workdir = workdir;
              const PipelineResult result = run_full_pipeline(cfg);
              py::dict out;
              out["model"] = result.ledger.model;
              out["teacher"] = result.ledger.teacher;
              out["pruned"] = result.ledger.pruned;
              out["recovered"] = result.ledger.recovered;
              out["improvement"] = result.ledger.improvement;
              return out;
          },
          py::arg("config_json") = "", py::arg("workdir") = "");
}
