#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "protohead/model.hpp"
#include "protohead/tape.hpp"
#include "checks.hpp"

using namespace protohead;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.input = {1, 6, 6};
    cfg.hidden = {12};
    cfg.feature_dim = 5;
    cfg.classes_per_task = 3;
    cfg.prototype = {1, 4, 4};
    cfg.hypernet_hidden = 9;
    return cfg;
}

std::vector<Prototype> random_protos(int task, const ModelConfig& cfg, std::mt19937_64& rng) {
    std::vector<Prototype> out;
    for (int c = 0; c < cfg.classes_per_task; ++c) {
        out.push_back(init_prototype_random(task, c, cfg.prototype, rng));
    }
    return out;
}

struct TapeReset {
    TapeReset() { Tape::active().clear(); }
    ~TapeReset() { Tape::active().clear(); }
};

}  // namespace

TEST_CASE("embedding and head sizes") {
    ModelConfig cfg;
    cfg.classes_per_task = 10;
    cfg.prototype = {3, 10, 10};
    cfg.feature_dim = 64;
    CHECK(cfg.embedding_dim() == 3000);
    CHECK(cfg.head_param_count() == 650);

    CHECK(small_config().embedding_dim() == 3 * 16);
    CHECK(small_config().head_param_count() == 3 * 6);
}

TEST_CASE("construction is deterministic in the rng") {
    TapeReset guard;
    std::mt19937_64 rng1(11), rng2(11), rng3(12);
    const HyperHeadModel a(small_config(), rng1);
    const HyperHeadModel b(small_config(), rng2);
    const HyperHeadModel c(small_config(), rng3);
    CHECK(testsupport::checksum(a.parameters()) == testsupport::checksum(b.parameters()));
    CHECK(testsupport::checksum(a.parameters()) != testsupport::checksum(c.parameters()));
}

TEST_CASE("config validation") {
    std::mt19937_64 rng(1);
    ModelConfig bad = small_config();
    bad.classes_per_task = 1;
    CHECK_THROWS_AS(HyperHeadModel(bad, rng), ValueError);
    bad = small_config();
    bad.prototype.channels = 2;
    CHECK_THROWS_AS(HyperHeadModel(bad, rng), ValueError);
}

TEST_CASE("forward shapes and unknown task errors") {
    TapeReset guard;
    std::mt19937_64 rng(3);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));

    const Tensor x = Tensor::from_data({2, 36}, std::vector<double>(72, 0.1));
    CHECK(model.features(x).shape() == Shape{2, 5});
    CHECK(model.forward(x, 1).shape() == Shape{2, 3});
    CHECK(model.prototype_logits(1).shape() == Shape{3, 3});
    CHECK_THROWS_AS(model.forward(x, 2), UnknownTaskError);
    CHECK_THROWS_AS(model.prototypes().task_embedding(7), UnknownTaskError);
}

TEST_CASE("freshly generated heads start near uniform") {
    TapeReset guard;
    std::mt19937_64 rng(5);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));

    std::vector<double> px(2 * 36);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : px) v = gauss(rng);
    const Tensor logits = model.forward(Tensor::from_data({2, 36}, std::move(px)), 1);
    for (int i = 0; i < 2; ++i) {
        double mx = -1e30, mn = 1e30;
        for (int c = 0; c < 3; ++c) {
            mx = std::max(mx, logits.data()[i * 3 + c]);
            mn = std::min(mn, logits.data()[i * 3 + c]);
        }
        CHECK(mx - mn < 1.0);
    }
}

TEST_CASE("prototype registration contract") {
    TapeReset guard;
    std::mt19937_64 rng(7);
    HyperHeadModel model(small_config(), rng);

    CHECK_THROWS_AS(model.register_task_prototypes(2, random_protos(2, model.config(), rng)),
                    UnknownTaskError);

    auto protos = random_protos(1, model.config(), rng);
    protos.pop_back();
    CHECK_THROWS_AS(model.register_task_prototypes(1, std::move(protos)), ValueError);

    auto swapped = random_protos(1, model.config(), rng);
    std::swap(swapped[0], swapped[1]);
    CHECK_THROWS_AS(model.register_task_prototypes(1, std::move(swapped)), ValueError);

    auto wrong_shape = random_protos(1, model.config(), rng);
    wrong_shape[1].values = Tensor::zeros({1, 3, 3}, true);
    CHECK_THROWS_AS(model.register_task_prototypes(1, std::move(wrong_shape)), ShapeError);

    model.register_task_prototypes(1, random_protos(1, model.config(), rng));
    CHECK_THROWS_AS(model.register_task_prototypes(1, random_protos(1, model.config(), rng)),
                    UnknownTaskError);
    model.register_task_prototypes(2, random_protos(2, model.config(), rng));
    CHECK(model.prototypes().num_tasks() == 2);
}

TEST_CASE("task embedding is the class-ordered flatten of the prototypes") {
    TapeReset guard;
    std::mt19937_64 rng(9);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));

    const Tensor emb = model.prototypes().task_embedding(1);
    REQUIRE(emb.shape() == Shape{model.config().embedding_dim()});
    std::vector<double> manual;
    for (const Prototype& p : model.prototypes().task(1)) {
        manual.insert(manual.end(), p.values.data().begin(), p.values.data().end());
    }
    CHECK(emb.data() == manual);
}

TEST_CASE("prototype batch equals raw prototypes when shapes already match") {
    TapeReset guard;
    std::mt19937_64 rng(13);
    ModelConfig cfg = small_config();
    cfg.prototype = {1, 6, 6};
    HyperHeadModel model(cfg, rng);
    model.register_task_prototypes(1, random_protos(1, cfg, rng));

    const Tensor batch = prototype_input_batch(model.prototypes(), 1, cfg.input);
    REQUIRE(batch.shape() == Shape{3, 36});
    for (int c = 0; c < 3; ++c) {
        const auto& vals = model.prototypes().task(1)[c].values.data();
        for (int i = 0; i < 36; ++i) CHECK(batch.data()[c * 36 + i] == vals[i]);
    }
}

TEST_CASE("parameter inventory") {
    TapeReset guard;
    std::mt19937_64 rng(17);
    const ModelConfig cfg = small_config();
    HyperHeadModel model(cfg, rng);
    // backbone 36->12->5, hypernet 48->9->18, no prototypes yet
    const long backbone = 36 * 12 + 12 + 12 * 5 + 5;
    const long hypernet = 48 * 9 + 9 + 9 * 18 + 18;
    CHECK(model.parameter_count() == backbone + hypernet);
    CHECK(model.network_parameters().size() == 8);

    model.register_task_prototypes(1, random_protos(1, cfg, rng));
    CHECK(model.parameter_count() == backbone + hypernet + 3 * 16);
    CHECK(model.parameters().size() == 11);
}

TEST_CASE("clone is deep and forward-identical") {
    TapeReset guard;
    std::mt19937_64 rng(19);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));

    HyperHeadModel copy = model.clone();
    CHECK(testsupport::checksum(copy.parameters()) == testsupport::checksum(model.parameters()));

    const Tensor x = Tensor::from_data({1, 36}, std::vector<double>(36, 0.2));
    const Tensor before = copy.forward(x, 1);

    model.parameters()[0].data()[0] += 1.0;
    model.prototypes().task(1)[0].values.data()[0] += 1.0;
    const Tensor after = copy.forward(x, 1);
    CHECK(before.data() == after.data());
    CHECK(testsupport::checksum(copy.parameters()) != testsupport::checksum(model.parameters()));
}

TEST_CASE("frozen model ignores live updates and records nothing") {
    TapeReset guard;
    std::mt19937_64 rng(23);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));

    const FrozenModel frozen(model);
    const Tensor x = Tensor::from_data({1, 36}, std::vector<double>(36, 0.3));
    const Tensor live_out = model.forward(x, 1);
    const Tensor frozen_out = frozen.forward(x, 1);
    for (int i = 0; i < 3; ++i) {
        CHECK(frozen_out.data()[i] == doctest::Approx(live_out.data()[i]).epsilon(1e-15));
    }

    model.parameters()[0].data()[0] += 0.5;
    const Tensor frozen_after = frozen.forward(x, 1);
    CHECK(frozen_after.data() == frozen_out.data());

    const std::size_t before = Tape::active().size();
    (void)frozen.forward(x, 1);
    (void)frozen.prototype_logits(1);
    (void)frozen.prototype_logits_from_bank(1, model.prototypes());
    CHECK(Tape::active().size() == before);
    for (const Tensor& t : frozen.net().parameters()) {
        CHECK_FALSE(t.requires_grad());
        CHECK_FALSE(t.has_grad());
    }
}

TEST_CASE("frozen logits from the live bank track live prototypes") {
    TapeReset guard;
    std::mt19937_64 rng(29);
    HyperHeadModel model(small_config(), rng);
    model.register_task_prototypes(1, random_protos(1, model.config(), rng));
    const FrozenModel frozen(model);

    const Tensor from_own = frozen.prototype_logits(1);
    const Tensor from_live = frozen.prototype_logits_from_bank(1, model.prototypes());
    for (std::size_t i = 0; i < from_own.data().size(); ++i) {
        CHECK(from_live.data()[i] == doctest::Approx(from_own.data()[i]).epsilon(1e-15));
    }

    model.prototypes().task(1)[0].values.data()[0] += 2.0;
    const Tensor moved = frozen.prototype_logits_from_bank(1, model.prototypes());
    bool changed = false;
    for (std::size_t i = 0; i < moved.data().size(); ++i) {
        changed = changed || moved.data()[i] != from_own.data()[i];
    }
    CHECK(changed);
    CHECK(frozen.prototype_logits(1).data() == from_own.data());
}

TEST_CASE("build_model_shell matches the trained model's layout") {
    TapeReset guard;
    std::mt19937_64 rng(31);
    const HyperHeadModel model(small_config(), rng);
    const HyperHeadModel shell = build_model_shell(small_config());
    CHECK(shell.parameter_count() == model.parameter_count());
    for (const Tensor& t : shell.network_parameters()) {
        for (double v : t.data()) CHECK(v == 0.0);
        CHECK(t.requires_grad());
    }
}

TEST_CASE("semantic prototype init resizes a real train image") {
    TapeReset guard;
    SyntheticSpec spec;
    spec.num_tasks = 1;
    spec.classes_per_task = 3;
    spec.train_per_class = 4;
    spec.test_per_class = 1;
    spec.shape = {1, 6, 6};
    spec.noise = 0.0;
    spec.seed = 77;
    const auto tasks = make_synthetic_tasks(spec);
    const TaskDataset& task = tasks[0];

    const ImageShape proto_shape{1, 6, 6};
    std::mt19937_64 rng(41);
    const Prototype p = init_prototype_semantic(task, 2, rng, task.stats, proto_shape);
    CHECK(p.task_id == task.task_id);
    CHECK(p.class_id == 2);
    CHECK(p.values.requires_grad());
    REQUIRE(p.values.shape() == Shape{1, 6, 6});

    // noise 0 and matching sizes: the prototype must be the normalized pixels
    // of one of the class's train images.
    bool matched = false;
    for (const Sample& s : task.train) {
        if (s.label != 2) continue;
        const auto norm = normalize_pixels(s.pixels, task.shape, task.stats);
        bool same = true;
        for (int i = 0; i < 36; ++i) same = same && norm[i] == p.values.data()[i];
        matched = matched || same;
    }
    CHECK(matched);

    std::mt19937_64 rng_a(41), rng_b(41);
    const Prototype pa = init_prototype_semantic(task, 2, rng_a, task.stats, proto_shape);
    const Prototype pb = init_prototype_semantic(task, 2, rng_b, task.stats, proto_shape);
    CHECK(pa.values.data() == pb.values.data());
}

TEST_CASE("random prototype init has the advertised scale") {
    std::mt19937_64 rng(43);
    const ImageShape shape{3, 10, 10};
    double sq = 0.0;
    int n = 0;
    for (int i = 0; i < 50; ++i) {
        const Prototype p = init_prototype_random(1, 0, shape, rng);
        CHECK(p.values.shape() == Shape{3, 10, 10});
        CHECK(p.values.requires_grad());
        for (double v : p.values.data()) {
            sq += v * v;
            ++n;
        }
    }
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.1).epsilon(0.05));
}
