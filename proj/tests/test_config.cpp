#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <vector>

#include "protohead/config.hpp"

using namespace protohead;

TEST_CASE("an empty config is the default config") {
    const RunConfig cfg = parse_config("");
    CHECK(cfg == RunConfig{});
    CHECK(cfg.dataset.kind == "synthetic");
    CHECK(cfg.dataset.num_tasks == 5);
    CHECK(cfg.dataset.classes_per_task == 4);
    CHECK(cfg.model.feature_dim == 64);
    CHECK(cfg.model.hidden == std::vector<int>{256});
    CHECK(cfg.model.proto_height == 10);
    CHECK(cfg.loss.stability == 0.5);
    CHECK(cfg.loss.sp_weight == 1.0);
    CHECK(cfg.loss.proto_teacher == "live");
    CHECK(cfg.proto_init == "semantic");
    CHECK(cfg.train.epochs == 20);
    CHECK(cfg.seed == 1);
}

TEST_CASE("comments, blanks, and spacing are tolerated") {
    const RunConfig cfg = parse_config(
        "# a comment\n"
        "\n"
        "  dataset.num_tasks   =  3   # trailing comment\n"
        "loss.stability=0.25\n"
        "model.hidden = 64, 32\n");
    CHECK(cfg.dataset.num_tasks == 3);
    CHECK(cfg.loss.stability == 0.25);
    CHECK(cfg.model.hidden == std::vector<int>{64, 32});
}

TEST_CASE("round trip is lossless for defaults and ugly doubles") {
    const RunConfig defaults;
    CHECK(parse_config(serialize_config(defaults)) == defaults);

    RunConfig cfg;
    cfg.dataset.noise = 0.1;
    cfg.loss.stability = 1.0 / 3.0;
    cfg.loss.sp_weight = 2.5e-7;
    cfg.optim.lr = 3.141592653589793e-4;
    cfg.optim.eps = 1e-12;
    cfg.model.hidden = {128, 64, 32};
    cfg.dataset.shuffle_seed = 123456789012345ull;
    cfg.output_dir = "runs/deep dir/x";
    CHECK(parse_config(serialize_config(cfg)) == cfg);
}

TEST_CASE("round trip holds at every sweep point") {
    const RunConfig base;
    for (const char* v : {"5", "10", "16", "20", "30"}) {
        const RunConfig cfg = apply_axis(base, SweepAxis::ProtoShape, v);
        CHECK(parse_config(serialize_config(cfg)) == cfg);
    }
    for (const char* v : {"0.1", "0.25", "0.5", "1.0", "1.5"}) {
        const RunConfig cfg = apply_axis(base, SweepAxis::Stability, v);
        CHECK(parse_config(serialize_config(cfg)) == cfg);
    }
    for (const char* v : {"0", "0.5", "1", "2"}) {
        const RunConfig cfg = apply_axis(base, SweepAxis::SpWeight, v);
        CHECK(parse_config(serialize_config(cfg)) == cfg);
    }
    for (const char* v : {"semantic", "random"}) {
        const RunConfig cfg = apply_axis(base, SweepAxis::Init, v);
        CHECK(parse_config(serialize_config(cfg)) == cfg);
    }
}

TEST_CASE("unknown keys and malformed lines name the line") {
    CHECK_THROWS_WITH_AS(parse_config("dataset.num_tasks = 3\nnope.key = 1\n"),
                         doctest::Contains("line 2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("just some words\n"), doctest::Contains("line 1"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("dataset.num_tasks = three\n"),
                         doctest::Contains("bad integer"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("loss.stability = high\n"), doctest::Contains("bad number"),
                         ConfigError);
}

TEST_CASE("validation rejects out-of-range fields") {
    CHECK_THROWS_AS(parse_config("dataset.classes_per_task = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("dataset.noise = -0.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("dataset.kind = archive\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("dataset.kind = csv\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("loss.temperature = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("loss.proto_teacher = warm\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("optim.kind = lbfgs\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("optim.beta1 = 1.0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("optim.lr = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.epochs = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("train.batch_size = -4\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("init.prototypes = zeros\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("model.proto_height = 0\n"), ConfigError);
    CHECK_NOTHROW(parse_config("loss.stability = 0\n"));
    CHECK_NOTHROW(parse_config("loss.sp_weight = 0\n"));
    CHECK_NOTHROW(parse_config("dataset.noise = 0\n"));
}

TEST_CASE("axis names parse both ways") {
    CHECK(parse_axis("proto_shape") == SweepAxis::ProtoShape);
    CHECK(parse_axis("stability") == SweepAxis::Stability);
    CHECK(parse_axis("lsp_weight") == SweepAxis::SpWeight);
    CHECK(parse_axis("init") == SweepAxis::Init);
    CHECK_FALSE(parse_axis("learning_rate").has_value());
    CHECK_FALSE(parse_axis("").has_value());
    for (SweepAxis a : {SweepAxis::ProtoShape, SweepAxis::Stability, SweepAxis::SpWeight,
                        SweepAxis::Init}) {
        CHECK(parse_axis(axis_name(a)) == a);
    }
}

TEST_CASE("apply_axis overrides exactly one knob") {
    const RunConfig base;

    const RunConfig shape = apply_axis(base, SweepAxis::ProtoShape, "16");
    CHECK(shape.model.proto_height == 16);
    CHECK(shape.model.proto_width == 16);
    RunConfig expect = base;
    expect.model.proto_height = 16;
    expect.model.proto_width = 16;
    CHECK(shape == expect);

    const RunConfig stab = apply_axis(base, SweepAxis::Stability, "1.5");
    CHECK(stab.loss.stability == 1.5);
    CHECK(stab.loss.sp_weight == base.loss.sp_weight);

    const RunConfig spw = apply_axis(base, SweepAxis::SpWeight, "0");
    CHECK(spw.loss.sp_weight == 0.0);

    const RunConfig init = apply_axis(base, SweepAxis::Init, "random");
    CHECK(init.proto_init == "random");

    CHECK_THROWS_AS(apply_axis(base, SweepAxis::ProtoShape, "0"), ConfigError);
    CHECK_THROWS_AS(apply_axis(base, SweepAxis::ProtoShape, "ten"), ConfigError);
    CHECK_THROWS_AS(apply_axis(base, SweepAxis::Stability, "-1"), ConfigError);
    CHECK_THROWS_AS(apply_axis(base, SweepAxis::Init, "zeros"), ConfigError);
}

TEST_CASE("missing config files are a config error") {
    CHECK_THROWS_AS(load_config_file("/nonexistent/path/to.cfg"), ConfigError);
}
