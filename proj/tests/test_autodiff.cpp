#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "protohead/grad_check.hpp"
#include "protohead/ops.hpp"
#include "protohead/tape.hpp"
#include "protohead/tensor.hpp"

using namespace protohead;

namespace {

Tensor leaf(Shape shape, std::vector<double> v) {
    return Tensor::from_data(std::move(shape), std::move(v), true);
}

struct TapeReset {
    TapeReset() { Tape::active().clear(); }
    ~TapeReset() { Tape::active().clear(); }
};

}  // namespace

TEST_CASE("tensor constructors and shape validation") {
    TapeReset guard;
    const Tensor z = Tensor::zeros({2, 3});
    CHECK(z.numel() == 6);
    CHECK(z.data() == std::vector<double>(6, 0.0));

    const Tensor f = Tensor::full({2}, 1.5);
    CHECK(f.data() == std::vector<double>{1.5, 1.5});

    const Tensor s = Tensor::scalar(-4.0);
    CHECK(s.is_scalar());
    CHECK(s.item() == -4.0);

    CHECK_THROWS_AS(Tensor::zeros({}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({-1}), ShapeError);
    CHECK_THROWS_AS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), ValueError);
}

TEST_CASE("deep_copy detaches storage but keeps the flag") {
    TapeReset guard;
    Tensor a = leaf({2}, {1.0, 2.0});
    Tensor b = a.deep_copy();
    b.data()[0] = 9.0;
    CHECK(a.data()[0] == 1.0);
    CHECK(b.requires_grad());

    Tensor alias = a;
    alias.data()[0] = 7.0;
    CHECK(a.data()[0] == 7.0);
}

TEST_CASE("backward computes d(sum(x*x))/dx = 2x") {
    TapeReset guard;
    Tensor x = leaf({3}, {1.0, -2.0, 0.5});
    Tape::active().backward(sum(mul(x, x)));
    REQUIRE(x.has_grad());
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x.grad()[1] == doctest::Approx(-4.0).epsilon(1e-12));
    CHECK(x.grad()[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("repeated backward adds exactly one contribution per call") {
    TapeReset guard;
    Tensor x = leaf({2}, {3.0, 4.0});
    const Tensor loss = sum(mul(x, x));
    Tape::active().backward(loss);
    const std::vector<double> once = x.grad();
    Tape::active().backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0 * once[0]).epsilon(1e-15));
    CHECK(x.grad()[1] == doctest::Approx(2.0 * once[1]).epsilon(1e-15));

    x.zero_grad();
    Tape::active().backward(loss);
    CHECK(x.grad() == once);
}

TEST_CASE("gradients accumulate across different losses") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    Tape::active().backward(sum(x));
    Tape::active().backward(scale(sum(x), 2.0));
    CHECK(x.grad()[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(x.grad()[1] == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("a tensor used twice in one graph gets both contributions") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    Tape::active().backward(sum(add(x, x)));
    CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(x.grad()[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar and leaves no adjoint scratch behind") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    const Tensor y = mul(x, x);
    CHECK_THROWS_AS(Tape::active().backward(y), ValueError);
    const Tensor loss = sum(y);
    Tape::active().backward(loss);
    CHECK(x.node()->adjoint.empty());
    CHECK(loss.node()->adjoint.empty());
}

TEST_CASE("tensors outside the gradient set never allocate a grad") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    Tensor frozen = leaf({2}, {5.0, 6.0});
    frozen.set_requires_grad(false);
    Tape::active().backward(sum(mul(x, frozen)));
    CHECK(x.has_grad());
    CHECK_FALSE(frozen.has_grad());
}

TEST_CASE("NoGradGuard suppresses recording") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    const std::size_t before = Tape::active().size();
    {
        NoGradGuard ng;
        const Tensor y = sum(mul(x, x));
        CHECK_FALSE(y.requires_grad());
    }
    CHECK(Tape::active().size() == before);
    CHECK(grad_enabled());
}

TEST_CASE("detach blocks gradient flow") {
    TapeReset guard;
    Tensor x = leaf({2}, {1.0, 2.0});
    Tape::active().backward(sum(mul(detach(x), x)));
    CHECK(x.grad()[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(x.grad()[1] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("matmul value oracle") {
    TapeReset guard;
    const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from_data({2, 2}, {5, 6, 7, 8});
    const Tensor c = matmul(a, b);
    CHECK(c.data() == std::vector<double>{19, 22, 43, 50});
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("transpose value oracle") {
    TapeReset guard;
    const Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor t = transpose(a);
    CHECK(t.shape() == Shape{3, 2});
    CHECK(t.data() == std::vector<double>{1, 4, 2, 5, 3, 6});
}

TEST_CASE("elementwise and broadcast arithmetic") {
    TapeReset guard;
    const Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
    const Tensor b = Tensor::from_data({2, 2}, {10, 20, 30, 40});
    const Tensor bias = Tensor::from_data({2}, {100, 200});
    CHECK(add(a, b).data() == std::vector<double>{11, 22, 33, 44});
    CHECK(sub(b, a).data() == std::vector<double>{9, 18, 27, 36});
    CHECK(mul(a, b).data() == std::vector<double>{10, 40, 90, 160});
    CHECK(add(a, bias).data() == std::vector<double>{101, 202, 103, 204});
    CHECK(mul(a, bias).data() == std::vector<double>{100, 400, 300, 800});
    CHECK(scale(a, -2.0).data() == std::vector<double>{-2, -4, -6, -8});
    CHECK(add_scalar(a, 0.5).data() == std::vector<double>{1.5, 2.5, 3.5, 4.5});
    CHECK_THROWS_AS(add(a, Tensor::zeros({3})), ShapeError);
    CHECK_THROWS_AS(add(a, Tensor::zeros({4, 1})), ShapeError);
}

TEST_CASE("relu, exp, log value oracles") {
    TapeReset guard;
    const Tensor x = Tensor::from_data({4}, {-1.0, 0.0, 2.0, -0.5});
    CHECK(relu(x).data() == std::vector<double>{0.0, 0.0, 2.0, 0.0});

    const Tensor e = exp(Tensor::from_data({2}, {0.0, 1.0}));
    CHECK(e.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(e.data()[1] == doctest::Approx(std::exp(1.0)).epsilon(1e-15));

    const Tensor l = log(Tensor::from_data({1}, {10.0}));
    CHECK(l.item() == doctest::Approx(2.302585092994046).epsilon(1e-15));
    CHECK_THROWS_AS(log(Tensor::from_data({2}, {1.0, 0.0})), ValueError);
    CHECK_THROWS_AS(log(Tensor::from_data({1}, {-3.0})), ValueError);
}

TEST_CASE("sum and mean with the relu kink oracle") {
    TapeReset guard;
    const Tensor x = Tensor::from_data({4}, {1.0, 2.0, 3.0, 4.0});
    CHECK(sum(x).item() == 10.0);
    CHECK(mean(x).item() == 2.5);

    // d/dx mean(relu([-1, 1])) = [0, 0.5], by the subgradient convention
    // relu'(x <= 0) = 0.
    Tensor y = leaf({2}, {-1.0, 1.0});
    Tape::active().backward(mean(relu(y)));
    CHECK(y.grad()[0] == 0.0);
    CHECK(y.grad()[1] == 0.5);
}

TEST_CASE("reshape, concat, slice") {
    TapeReset guard;
    const Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor r = reshape(a, {3, 2});
    CHECK(r.shape() == Shape{3, 2});
    CHECK(r.data() == a.data());
    CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);

    const Tensor c = concat({Tensor::from_data({2}, {1, 2}), Tensor::from_data({2, 2}, {3, 4, 5, 6})});
    CHECK(c.shape() == Shape{6});
    CHECK(c.data() == std::vector<double>{1, 2, 3, 4, 5, 6});

    const Tensor s = slice(c, 1, 3);
    CHECK(s.data() == std::vector<double>{2, 3, 4});
    CHECK_THROWS_AS(slice(c, 4, 3), ShapeError);
    CHECK_THROWS_AS(slice(c, -1, 2), ShapeError);
}

TEST_CASE("log_softmax oracle and stability") {
    TapeReset guard;
    // softmax([1, 0]) = [1/(1+e^-1), ...]; log of the first entry is
    // -ln(1 + e^-1).
    const Tensor ls = log_softmax(Tensor::from_data({1, 2}, {1.0, 0.0}));
    CHECK(ls.data()[0] == doctest::Approx(-0.31326168751822286).epsilon(1e-14));
    CHECK(ls.data()[1] == doctest::Approx(-1.31326168751822286).epsilon(1e-14));

    // Shift invariance and overflow safety.
    const Tensor big = log_softmax(Tensor::from_data({1, 2}, {1001.0, 1000.0}));
    CHECK(big.data()[0] == doctest::Approx(-0.31326168751822286).epsilon(1e-12));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> v(8);
        for (double& x : v) x = u(rng);
        const Tensor out = log_softmax(Tensor::from_data({2, 4}, std::move(v)));
        for (int row = 0; row < 2; ++row) {
            double total = 0.0;
            for (int c = 0; c < 4; ++c) total += std::exp(out.data()[row * 4 + c]);
            CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
    CHECK_THROWS_AS(log_softmax(Tensor::zeros({3})), ShapeError);
    CHECK_THROWS_AS(log_softmax(Tensor::zeros({3, 1})), ShapeError);
}

TEST_CASE("nll oracle") {
    TapeReset guard;
    const Tensor lp = Tensor::from_data({2, 2}, {-0.5, -1.2, -2.0, -0.3});
    CHECK(nll(lp, {0, 1}).item() == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(nll(lp, {1, 0}).item() == doctest::Approx(1.6).epsilon(1e-15));
    CHECK_THROWS_AS(nll(lp, {0, 2}), ValueError);
    CHECK_THROWS_AS(nll(lp, {-1, 0}), ValueError);
    CHECK_THROWS_AS(nll(lp, {0}), ShapeError);
}

TEST_CASE("resize_bilinear identity, average, and block means") {
    TapeReset guard;
    const Tensor img = Tensor::from_data({1, 2, 2}, {1.0, 3.0, 5.0, 7.0});
    CHECK(resize_bilinear(img, 2, 2).data() == img.data());

    const Tensor one = resize_bilinear(img, 1, 1);
    CHECK(one.item() == doctest::Approx(4.0).epsilon(1e-15));

    // Exact 2x downsample hits every source pixel pair's midpoint, so each
    // output equals its 2x2 block mean.
    std::vector<double> big(16);
    for (int i = 0; i < 16; ++i) big[i] = i * i;
    const Tensor down = resize_bilinear(Tensor::from_data({1, 4, 4}, std::move(big)), 2, 2);
    for (int r = 0; r < 2; ++r) {
        for (int c = 0; c < 2; ++c) {
            double want = 0.0;
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc) {
                    const int i = (2 * r + dr) * 4 + (2 * c + dc);
                    want += i * i;
                }
            CHECK(down.data()[r * 2 + c] == doctest::Approx(want / 4.0).epsilon(1e-13));
        }
    }
    CHECK_THROWS_AS(resize_bilinear(Tensor::zeros({4, 4}), 2, 2), ShapeError);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 2), ValueError);
}

TEST_CASE("grad_check validates eps and flags corrupted backward rules") {
    TapeReset guard;
    Tensor x = leaf({3}, {0.5, -0.7, 1.3});
    auto f = [](const Tensor& t) { return sum(mul(t, t)); };
    CHECK(grad_check(f, x) < 1e-8);
    CHECK_THROWS_AS(grad_check(f, x, 1e-9), ValueError);
    CHECK_THROWS_AS(grad_check(f, x, 0.1), ValueError);

    detail::corrupt_relu_backward = true;
    Tensor y = leaf({3}, {0.5, 0.7, 1.3});
    const double err = grad_check([](const Tensor& t) { return sum(relu(t)); }, y);
    detail::corrupt_relu_backward = false;
    CHECK(err > 1e-3);
}

TEST_CASE("battery registers every primitive exactly once") {
    const auto& cases = gradcheck_cases();
    std::set<std::string> names;
    for (const auto& c : cases) CHECK(names.insert(c.name).second);
    for (const char* op :
         {"matmul", "transpose", "add", "sub", "mul", "scale", "add_scalar", "relu", "exp", "log",
          "sum", "mean", "reshape", "concat", "slice", "log_softmax", "nll", "resize_bilinear"}) {
        CHECK(names.count(op) == 1);
    }
}

TEST_CASE("battery passes at its own tolerances") {
    const auto results = run_gradcheck_battery(1, 2026);
    for (const auto& r : results) {
        INFO(r.name);
        CHECK(r.max_error <= r.tolerance);
    }
}
