#include <cmath>
#include <iomanip>
#include <ostream>

#include "protohead/grad_check.hpp"
#include "protohead/losses.hpp"
#include "protohead/model.hpp"
#include "protohead/ops.hpp"

namespace protohead {

namespace {

constexpr double kPrimitiveTol = 1e-5;
constexpr double kCompositeTol = 1e-4;

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Tensor rand_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                   bool requires_grad = true) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = uniform(rng, lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Entries bounded away from zero so finite differences never cross the kink.
Tensor rand_tensor_off_zero(std::mt19937_64& rng, Shape shape) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) {
        const double mag = uniform(rng, 0.1, 1.0);
        x = uniform(rng, 0.0, 1.0) < 0.5 ? -mag : mag;
    }
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

// Weighted sum turns any tensor-valued op into a scalar with distinct
// per-coordinate sensitivities.
Tensor pool(const Tensor& t, const Tensor& weights) {
    return sum(mul(t, weights));
}

std::vector<int> rand_labels(std::mt19937_64& rng, int n, int classes) {
    std::vector<int> y(n);
    std::uniform_int_distribution<int> d(0, classes - 1);
    for (int& v : y) v = d(rng);
    return y;
}

// Small two-layer setup with `tasks` registered prototype sets, a snapshot
// missing the newest task, and live weights nudged away from the snapshot so
// distillation terms have generic gradients.
struct ToyRig {
    HyperHeadModel model;
    FrozenModel frozen;
    Tensor x;
    std::vector<int> y;
    int task;
};

ToyRig make_toy(std::mt19937_64& rng, int tasks) {
    ModelConfig cfg;
    cfg.input = {1, 6, 6};
    cfg.hidden = {8};
    cfg.feature_dim = 5;
    cfg.classes_per_task = 3;
    cfg.prototype = {1, 3, 3};
    cfg.hypernet_hidden = 7;

    HyperHeadModel model(cfg, rng);
    for (int t = 1; t < tasks; ++t) {
        std::vector<Prototype> protos;
        for (int c = 0; c < cfg.classes_per_task; ++c) {
            protos.push_back(init_prototype_random(t, c, cfg.prototype, rng));
        }
        model.register_task_prototypes(t, std::move(protos));
    }
    FrozenModel teacher(model);
    {
        std::vector<Prototype> protos;
        for (int c = 0; c < cfg.classes_per_task; ++c) {
            protos.push_back(init_prototype_random(tasks, c, cfg.prototype, rng));
        }
        model.register_task_prototypes(tasks, std::move(protos));
    }
    std::normal_distribution<double> nudge(0.0, 0.05);
    for (Tensor& p : model.parameters()) {
        for (double& v : p.data()) v += nudge(rng);
    }

    ToyRig rig{std::move(model), std::move(teacher),
               rand_tensor(rng, {2, cfg.input.numel()}, -1.0, 1.0, false),
               rand_labels(rng, 2, cfg.classes_per_task), tasks};
    return rig;
}

// Worst error over every parameter of the model for a loss the rig defines.
double check_all_params(const ToyRig& rig, const std::function<Tensor()>& loss) {
    double worst = 0.0;
    for (const Tensor& p : rig.model.parameters()) {
        worst = std::max(worst, grad_check([&](const Tensor&) { return loss(); }, p));
    }
    return worst;
}

std::vector<GradCheckCase> build_cases() {
    std::vector<GradCheckCase> cases;
    auto primitive = [&](const char* name, std::function<double(std::mt19937_64&)> run) {
        cases.push_back({name, kPrimitiveTol, std::move(run)});
    };
    auto composite = [&](const char* name, std::function<double(std::mt19937_64&)> run) {
        cases.push_back({name, kCompositeTol, std::move(run)});
    };

    primitive("matmul", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {3, 4});
        Tensor b = rand_tensor(rng, {4, 2});
        const Tensor w = rand_tensor(rng, {3, 2}, -1, 1, false);
        auto f_a = [&](const Tensor&) { return pool(matmul(a, b), w); };
        return std::max(grad_check(f_a, a), grad_check(f_a, b));
    });
    primitive("transpose", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {3, 4});
        const Tensor w = rand_tensor(rng, {4, 3}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(transpose(a), w); }, a);
    });
    primitive("add", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        Tensor b = rand_tensor(rng, {2, 3});
        Tensor bias = rand_tensor(rng, {3});
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        auto f_same = [&](const Tensor&) { return pool(add(a, b), w); };
        auto f_bias = [&](const Tensor&) { return pool(add(a, bias), w); };
        double err = std::max(grad_check(f_same, a), grad_check(f_same, b));
        err = std::max(err, grad_check(f_bias, a));
        return std::max(err, grad_check(f_bias, bias));
    });
    primitive("sub", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        Tensor b = rand_tensor(rng, {2, 3});
        Tensor bias = rand_tensor(rng, {3});
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        auto f_same = [&](const Tensor&) { return pool(sub(a, b), w); };
        auto f_bias = [&](const Tensor&) { return pool(sub(a, bias), w); };
        double err = std::max(grad_check(f_same, a), grad_check(f_same, b));
        return std::max(err, grad_check(f_bias, bias));
    });
    primitive("mul", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        Tensor b = rand_tensor(rng, {2, 3});
        Tensor bias = rand_tensor(rng, {3});
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        auto f_same = [&](const Tensor&) { return pool(mul(a, b), w); };
        auto f_bias = [&](const Tensor&) { return pool(mul(a, bias), w); };
        double err = std::max(grad_check(f_same, a), grad_check(f_same, b));
        return std::max(err, grad_check(f_bias, bias));
    });
    primitive("scale", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        const double c = uniform(rng, -2.0, 2.0);
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(scale(a, c), w); }, a);
    });
    primitive("add_scalar", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        const double c = uniform(rng, -2.0, 2.0);
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(add_scalar(a, c), w); }, a);
    });
    primitive("relu", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor_off_zero(rng, {3, 4});
        const Tensor w = rand_tensor(rng, {3, 4}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(relu(a), w); }, a);
    });
    primitive("exp", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3});
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(exp(a), w); }, a);
    });
    primitive("log", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 3}, 0.2, 2.0);
        const Tensor w = rand_tensor(rng, {2, 3}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(log(a), w); }, a);
    });
    primitive("sum", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {7});
        const double c = uniform(rng, 0.5, 2.0);
        return grad_check([&](const Tensor&) { return scale(sum(a), c); }, a);
    });
    primitive("mean", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {7});
        const double c = uniform(rng, 0.5, 2.0);
        return grad_check([&](const Tensor&) { return scale(mean(a), c); }, a);
    });
    primitive("reshape", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 6});
        const Tensor w = rand_tensor(rng, {3, 4}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(reshape(a, {3, 4}), w); }, a);
    });
    primitive("concat", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {3});
        Tensor b = rand_tensor(rng, {2, 2});
        const Tensor w = rand_tensor(rng, {7}, -1, 1, false);
        auto f = [&](const Tensor&) { return pool(concat({a, b}), w); };
        return std::max(grad_check(f, a), grad_check(f, b));
    });
    primitive("slice", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {10});
        const Tensor w = rand_tensor(rng, {5}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(slice(a, 2, 5), w); }, a);
    });
    primitive("log_softmax", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {3, 4}, -2.0, 2.0);
        const Tensor w = rand_tensor(rng, {3, 4}, -1, 1, false);
        return grad_check([&](const Tensor&) { return pool(log_softmax(a), w); }, a);
    });
    primitive("nll", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {3, 4}, -2.0, 2.0);
        const auto y = rand_labels(rng, 3, 4);
        return grad_check([&](const Tensor&) { return nll(log_softmax(a), y); }, a);
    });
    primitive("resize_bilinear", [](std::mt19937_64& rng) {
        Tensor a = rand_tensor(rng, {2, 5, 4});
        const Tensor up_w = rand_tensor(rng, {2, 7, 6}, -1, 1, false);
        const Tensor down_w = rand_tensor(rng, {2, 3, 2}, -1, 1, false);
        auto f_up = [&](const Tensor&) { return pool(resize_bilinear(a, 7, 6), up_w); };
        auto f_down = [&](const Tensor&) { return pool(resize_bilinear(a, 3, 2), down_w); };
        return std::max(grad_check(f_up, a), grad_check(f_down, a));
    });

    composite("hard_loss", [](std::mt19937_64& rng) {
        Tensor logits = rand_tensor(rng, {4, 3}, -2.0, 2.0);
        const auto y = rand_labels(rng, 4, 3);
        return grad_check([&](const Tensor&) { return hard_loss(logits, y); }, logits);
    });
    composite("kl_distill", [](std::mt19937_64& rng) {
        const Tensor old_logits = rand_tensor(rng, {3, 4}, -2.0, 2.0, false);
        Tensor new_logits = rand_tensor(rng, {3, 4}, -2.0, 2.0);
        auto f1 = [&](const Tensor&) { return kl_distill(old_logits, new_logits, 1.0); };
        auto f2 = [&](const Tensor&) { return kl_distill(old_logits, new_logits, 2.0); };
        return std::max(grad_check(f1, new_logits), grad_check(f2, new_logits));
    });
    composite("soft_loss_main", [](std::mt19937_64& rng) {
        ToyRig rig = make_toy(rng, 3);
        return check_all_params(rig, [&]() {
            return soft_loss_main(rig.frozen, rig.model, rig.x, rig.task, 1.0);
        });
    });
    composite("soft_loss_prototypes", [](std::mt19937_64& rng) {
        // The frozen-teacher mode keeps the loss a pure function of the live
        // parameters, which is what a finite-difference probe needs.
        ToyRig rig = make_toy(rng, 3);
        return check_all_params(rig, [&]() {
            return soft_loss_prototypes(rig.frozen, rig.model, rig.task,
                                        TeacherPrototypes::Frozen, 1.0);
        });
    });
    composite("total_loss", [](std::mt19937_64& rng) {
        Tensor a = Tensor::scalar(uniform(rng, 0.1, 2.0), true);
        Tensor b = Tensor::scalar(uniform(rng, 0.1, 2.0), true);
        Tensor c = Tensor::scalar(uniform(rng, 0.1, 2.0), true);
        const LossWeights w{uniform(rng, 0.1, 1.5), uniform(rng, 0.1, 2.0)};
        auto f = [&](const Tensor&) { return total_loss(a, b, c, w); };
        double err = std::max(grad_check(f, a), grad_check(f, b));
        return std::max(err, grad_check(f, c));
    });
    composite("training_step", [](std::mt19937_64& rng) {
        ToyRig rig = make_toy(rng, 2);
        const LossWeights w{0.5, 1.0};
        return check_all_params(rig, [&]() {
            const Tensor hard = hard_loss(rig.model.forward(rig.x, rig.task), rig.y);
            const Tensor soft_main = soft_loss_main(rig.frozen, rig.model, rig.x, rig.task, 1.0);
            const Tensor soft_proto = soft_loss_prototypes(rig.frozen, rig.model, rig.task,
                                                           TeacherPrototypes::Frozen, 1.0);
            return total_loss(hard, soft_main, soft_proto, w);
        });
    });

    return cases;
}

}  // namespace

const std::vector<GradCheckCase>& gradcheck_cases() {
    static const std::vector<GradCheckCase> cases = build_cases();
    return cases;
}

std::vector<GradCheckResult> run_gradcheck_battery(int trials, std::uint64_t seed) {
    if (trials < 1) throw ValueError("gradcheck: trials must be positive");
    std::vector<GradCheckResult> results;
    const auto& cases = gradcheck_cases();
    for (std::size_t i = 0; i < cases.size(); ++i) {
        GradCheckResult res;
        res.name = cases[i].name;
        res.tolerance = cases[i].tolerance;
        std::mt19937_64 rng(seed + 0x9E3779B97F4A7C15ULL * (i + 1));
        for (int t = 0; t < trials; ++t) {
            res.max_error = std::max(res.max_error, cases[i].run(rng));
        }
        res.passed = res.max_error <= res.tolerance;
        results.push_back(std::move(res));
    }
    return results;
}

bool run_gradcheck_report(std::ostream& out, int trials, std::uint64_t seed) {
    const auto results = run_gradcheck_battery(trials, seed);
    bool all_ok = true;
    for (const GradCheckResult& r : results) {
        out << std::left << std::setw(22) << r.name << " max_rel_err " << std::scientific
            << std::setprecision(3) << r.max_error << "  tol " << r.tolerance << "  "
            << (r.passed ? "ok" : "BREACH") << "\n";
        all_ok = all_ok && r.passed;
    }
    out.unsetf(std::ios::scientific);
    int passed = 0;
    for (const GradCheckResult& r : results) passed += r.passed ? 1 : 0;
    out << "gradcheck: " << passed << "/" << results.size() << " cases within tolerance\n";
    if (!all_ok) {
        for (const GradCheckResult& r : results) {
            if (!r.passed) out << "gradcheck: gradient mismatch in '" << r.name << "'\n";
        }
    }
    return all_ok;
}

}  // namespace protohead
