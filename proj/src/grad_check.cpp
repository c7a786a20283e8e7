#include "protohead/grad_check.hpp"

#include <cmath>

#include "protohead/tape.hpp"

namespace protohead {

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    if (!(eps >= 1e-7 && eps <= 1e-3)) {
        throw ValueError("grad_check: eps " + std::to_string(eps) + " outside [1e-7, 1e-3]");
    }
    if (!x.defined()) throw ValueError("grad_check: undefined tensor");

    const bool prior_flag = x.requires_grad();
    x.set_requires_grad(true);
    x.clear_grad();

    Tape& tape = Tape::active();
    const std::size_t mark = tape.size();
    Tensor out = f(x);
    if (!out.defined() || out.numel() != 1) {
        tape.truncate(mark);
        throw ValueError("grad_check: f must return a scalar");
    }
    tape.backward(out);
    tape.truncate(mark);

    std::vector<double> analytic(x.numel(), 0.0);
    if (x.has_grad()) analytic = x.grad();
    x.clear_grad();

    double worst = 0.0;
    {
        NoGradGuard ng;
        auto& v = x.data();
        for (int i = 0; i < x.numel(); ++i) {
            const double orig = v[i];
            v[i] = orig + eps;
            const double hi = f(x).item();
            v[i] = orig - eps;
            const double lo = f(x).item();
            v[i] = orig;
            const double numeric = (hi - lo) / (2.0 * eps);
            const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
            worst = std::max(worst, err);
        }
    }
    x.set_requires_grad(prior_flag);
    return worst;
}

}  // namespace protohead
