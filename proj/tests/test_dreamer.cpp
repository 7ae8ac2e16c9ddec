#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "dfkd/checkpoint.hpp"
#include "dfkd/dreamer.hpp"
#include "dfkd/error.hpp"
#include "dfkd/grad_check.hpp"
#include "dfkd/threading.hpp"
#include "dfkd/util.hpp"

using namespace dfkd;

namespace {

Tensor make(Shape shape, std::vector<float> data, bool rg = false) {
    return Tensor::from_vector(std::move(shape), std::move(data), rg);
}

std::string tmp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// small 2-BN-layer teacher for synthesis tests
Model toy_teacher(std::uint64_t seed) {
    Rng rng(seed, rng_stream::kModelInit);
    Model m = Model::build({LayerSpec::conv(2, 4, 3, 1, 1), LayerSpec::batchnorm(4),
                            LayerSpec::relu(), LayerSpec::conv(4, 4, 3, 2, 1),
                            LayerSpec::batchnorm(4), LayerSpec::relu(),
                            LayerSpec::globalavgpool(), LayerSpec::flatten(),
                            LayerSpec::linear(4, 3)},
                           {2, 8, 8}, &rng);
    // non-trivial running stats
    for (auto& layer : m.layers) {
        if (layer.spec.kind != LayerKind::batchnorm2d) continue;
        for (std::int64_t i = 0; i < layer.running_mean.numel(); ++i) {
            layer.running_mean.data()[i] = 0.1f * static_cast<float>(i + 1);
            layer.running_var.data()[i] = 0.5f + 0.2f * static_cast<float>(i);
        }
    }
    return m;
}

}  // namespace

TEST_CASE("entropy_loss values") {
    CHECK(entropy_loss(nullptr, make({1, 3}, {1, 0, 0})).item() ==
          doctest::Approx(0.0f).epsilon(1e-6));

    std::vector<float> uniform10(10, 0.1f);
    CHECK(entropy_loss(nullptr, make({1, 10}, uniform10)).item() ==
          doctest::Approx(std::log(10.0f)).epsilon(1e-5));

    CHECK(entropy_loss(nullptr, make({1, 2}, {0.5f, 0.5f})).item() ==
          doctest::Approx(std::log(2.0f)).epsilon(1e-6));

    // batch mean
    CHECK(entropy_loss(nullptr, make({2, 2}, {1, 0, 0.5f, 0.5f})).item() ==
          doctest::Approx(0.5f * std::log(2.0f)).epsilon(1e-6));

    CHECK_THROWS_AS(entropy_loss(nullptr, make({1, 2}, {-0.1f, 1.1f})), ContractError);
}

TEST_CASE("entropy_loss gradient through softmax") {
    Rng rng(83);
    std::vector<Tensor> inputs = {Tensor::randn({3, 4}, rng, true)};
    const double err = grad_check(
        [](Tape& t, std::vector<Tensor>& in) {
            return entropy_loss(&t, ops::softmax(&t, in[0], 1.0f));
        },
        inputs);
    CHECK(err < 1e-2);
}

TEST_CASE("bn_feature_loss values") {
    std::vector<BnBatchStats> stats;
    stats.push_back({make({2}, {1, 0}), make({2}, {1, 1})});
    std::vector<std::pair<Tensor, Tensor>> running;
    running.emplace_back(make({2}, {0, 0}), make({2}, {1, 1}));

    // ||(1,0)||_2 = 1, variances equal
    CHECK(bn_feature_loss(nullptr, stats, running).item() == doctest::Approx(1.0f).epsilon(1e-6));

    // identical stats -> exactly 0
    std::vector<BnBatchStats> same;
    same.push_back({make({2}, {0, 0}), make({2}, {1, 1})});
    CHECK(bn_feature_loss(nullptr, same, running).item() == 0.0f);

    // two layers each contributing 1.0
    stats.push_back({make({3}, {0, 0, 0}), make({3}, {1, 2, 3})});
    running.emplace_back(make({3}, {0, 0, 0}), make({3}, {1, 2, 2}));
    CHECK(bn_feature_loss(nullptr, stats, running).item() == doctest::Approx(2.0f).epsilon(1e-6));

    std::vector<BnBatchStats> short_stats(stats.begin(), stats.begin() + 1);
    CHECK_THROWS_AS(bn_feature_loss(nullptr, short_stats, running), ContractError);
    std::vector<std::pair<Tensor, Tensor>> bad_channels;
    bad_channels.emplace_back(make({3}, {0, 0, 0}), make({3}, {1, 1, 1}));
    CHECK_THROWS_AS(bn_feature_loss(nullptr, short_stats, bad_channels), ContractError);
}

TEST_CASE("bn_feature_loss gradient through a toy net") {
    Model teacher = toy_teacher(91);
    teacher.set_bn_mode(false);
    for (auto& p : teacher.trainable_parameters(true)) p.set_requires_grad(false);
    const auto running = bn_running_stats(teacher);
    Rng rng(92);
    std::vector<Tensor> inputs = {Tensor::randn({2, 2, 8, 8}, rng, true)};
    const double err = grad_check(
        [&](Tape& t, std::vector<Tensor>& in) {
            auto fw = teacher.forward(in[0], &t);
            return bn_feature_loss(&t, fw.bn_stats, running);
        },
        inputs);
    CHECK(err < 1e-2);
}

TEST_CASE("tv_loss values") {
    CHECK(ops::tv_loss(nullptr, Tensor::full({2, 3, 4, 4}, 0.7f)).item() == 0.0f);

    // vertical |2-0|+|3-1| = 4, horizontal |1-0|+|3-2| = 2
    CHECK(ops::tv_loss(nullptr, make({1, 1, 2, 2}, {0, 1, 2, 3})).item() == 6.0f);

    CHECK(ops::tv_loss(nullptr, Tensor::full({1, 1, 1, 7}, 2.5f)).item() == 0.0f);

    // batch mean: duplicating the image across the batch keeps the value
    Tensor two = make({2, 1, 2, 2}, {0, 1, 2, 3, 0, 1, 2, 3});
    CHECK(ops::tv_loss(nullptr, two).item() == 6.0f);
}

TEST_CASE("jitter is a circular shift with an exact inverse") {
    Tensor x = make({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor same = ops::jitter(nullptr, x, 0, 0);
    CHECK(std::memcmp(same.data(), x.data(), 4 * sizeof(float)) == 0);

    Tensor shifted = ops::jitter(nullptr, x, 1, 0);
    CHECK(std::vector<float>(shifted.data(), shifted.data() + 4) ==
          std::vector<float>{3, 4, 1, 2});

    Rng rng(93);
    Tensor r = Tensor::randn({2, 3, 5, 7}, rng);
    Tensor round = ops::jitter(nullptr, ops::jitter(nullptr, r, 2, -3), -2, 3);
    CHECK(std::memcmp(round.data(), r.data(),
                      static_cast<std::size_t>(r.numel()) * sizeof(float)) == 0);

    std::vector<Tensor> inputs = {Tensor::randn({1, 2, 4, 4}, rng, true)};
    const double err = grad_check(
        [](Tape& t, std::vector<Tensor>& in) {
            Tensor j = ops::jitter(&t, in[0], 1, 2);
            return ops::sum_all(&t, ops::mul(&t, j, j));
        },
        inputs);
    CHECK(err < 1e-2);
}

TEST_CASE("synthesize_batch with iters=0 returns the initial noise") {
    Model teacher = toy_teacher(94);
    SynthesisConfig cfg;
    cfg.iters = 0;
    cfg.n_images = 8;
    cfg.batch = 8;
    Rng rng(5, rng_stream::kDream);
    auto result = synthesize_batch(teacher, cfg, 8, rng);

    Rng rng2(5, rng_stream::kDream);
    Tensor expected = Tensor::randn({8, 2, 8, 8}, rng2);
    CHECK(std::memcmp(result.images.data(), expected.data(),
                      static_cast<std::size_t>(expected.numel()) * sizeof(float)) == 0);
    CHECK(result.logits.shape() == Shape{8, 3});
}

TEST_CASE("synthesis leaves the teacher bitwise unchanged") {
    Model teacher = toy_teacher(95);
    const std::string hash_before = model_hash(teacher);
    SynthesisConfig cfg;
    cfg.iters = 5;
    cfg.n_images = 8;
    cfg.batch = 8;
    Rng rng(6, rng_stream::kDream);
    synthesize_batch(teacher, cfg, 8, rng);
    CHECK(model_hash(teacher) == hash_before);
}

TEST_CASE("loss trace composes and pixels respect the clamp") {
    Model teacher = toy_teacher(96);
    SynthesisConfig cfg;
    cfg.iters = 6;
    cfg.n_images = 8;
    cfg.batch = 8;
    cfg.clamp_min = -1.5f;
    cfg.clamp_max = 1.5f;
    Rng rng(7, rng_stream::kDream);
    std::vector<IterLossRow> rows;
    auto result = synthesize_batch(teacher, cfg, 8, rng,
                                   [&](const IterLossRow& r) { rows.push_back(r); });
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        const double recomposed = r.entropy + cfg.lambda_bn * r.bn + cfg.lambda_tv * r.tv;
        CHECK(std::fabs(recomposed - r.total) <= 1e-5 * std::max(1.0, std::fabs(r.total)));
    }
    for (std::int64_t i = 0; i < result.images.numel(); ++i) {
        CHECK(result.images.data()[i] >= cfg.clamp_min);
        CHECK(result.images.data()[i] <= cfg.clamp_max);
    }
}

TEST_CASE("generate_dataset shape, determinism, and thread independence") {
    Model teacher = toy_teacher(97);
    SynthesisConfig cfg;
    cfg.n_images = 24;
    cfg.batch = 16;  // 2 batches, second partial
    cfg.iters = 3;
    cfg.seed = 11;

    set_num_threads(1);
    SynDataset a = generate_dataset(teacher, cfg, model_hash(teacher));
    CHECK(a.images.shape() == Shape{24, 2, 8, 8});
    CHECK(a.teacher_logits.shape() == Shape{24, 3});

    SynDataset b = generate_dataset(teacher, cfg, model_hash(teacher));
    CHECK(serialize_dfks(a) == serialize_dfks(b));

    set_num_threads(4);
    SynDataset c = generate_dataset(teacher, cfg, model_hash(teacher));
    set_num_threads(1);
    CHECK(serialize_dfks(a) == serialize_dfks(c));

    // 1024/64 -> 16 batches is the default split
    SynthesisConfig def;
    CHECK((def.n_images + def.batch - 1) / def.batch == 16);
}

TEST_CASE("dfks round trip and corruption handling") {
    Model teacher = toy_teacher(98);
    SynthesisConfig cfg;
    cfg.n_images = 8;
    cfg.batch = 8;
    cfg.iters = 2;
    SynDataset data = generate_dataset(teacher, cfg, model_hash(teacher));

    const std::string p1 = tmp_path("dreams_a.dfks");
    const std::string p2 = tmp_path("dreams_b.dfks");
    save_dfks(data, p1);
    SynDataset loaded = load_dfks(p1);
    save_dfks(loaded, p2);
    CHECK(read_file_bytes(p1) == read_file_bytes(p2));
    CHECK(loaded.teacher_hash == data.teacher_hash);
    CHECK(loaded.config.seed == cfg.seed);

    auto bytes = read_file_bytes(p1);
    bytes[0] = 'X';
    const std::string p3 = tmp_path("dreams_bad.dfks");
    write_file_bytes(p3, bytes);
    CHECK_THROWS_AS(load_dfks(p3), FormatError);

    bytes = read_file_bytes(p1);
    bytes.resize(bytes.size() - 16);
    write_file_bytes(p3, bytes);
    CHECK_THROWS_AS(load_dfks(p3), FormatError);
}

TEST_CASE("ppm dump writes P6 files with the exact length") {
    SynDataset data;
    data.images = Tensor::zeros({3, 3, 5, 7});
    // one constant image, two varied
    for (std::int64_t i = 0; i < 105; ++i) data.images.data()[105 + i] = static_cast<float>(i);
    for (std::int64_t i = 0; i < 105; ++i) data.images.data()[210 + i] = -static_cast<float>(i);
    data.teacher_logits = Tensor::zeros({3, 2});

    const std::string dir = tmp_path("dfkd_ppm");
    std::filesystem::remove_all(dir);
    dump_ppm(data, dir);

    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) ++count;
    CHECK(count == 3);

    const auto bytes = read_file_bytes(dir + std::string("/img_00000.ppm"));
    const std::string header = "P6\n7 5\n255\n";
    REQUIRE(bytes.size() == header.size() + 3 * 5 * 7);
    CHECK(std::memcmp(bytes.data(), header.data(), header.size()) == 0);
    // constant image maps to 0 everywhere
    for (std::size_t i = header.size(); i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("synthesis config validation") {
    SynthesisConfig cfg;
    cfg.batch = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.batch = 128;
    cfg.n_images = 64;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.clamp_min = 1.0f;
    cfg.clamp_max = -1.0f;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(target_mode_from_name("entropy") == TargetMode::entropy);
    CHECK(target_mode_from_name("balanced_ce") == TargetMode::balanced_ce);
    CHECK_THROWS_AS(target_mode_from_name("nope"), ConfigError);
}
