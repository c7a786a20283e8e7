#include "protohead/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace protohead {

namespace detail {
bool corrupt_relu_backward = false;
}

namespace {

using NodePtr = std::shared_ptr<TensorNode>;

bool wants_grad(const Tensor& a) {
    return grad_enabled() && a.requires_grad();
}

bool wants_grad(const Tensor& a, const Tensor& b) {
    return grad_enabled() && (a.requires_grad() || b.requires_grad());
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ValueError(std::string(op) + ": undefined tensor argument");
}

// Elementwise pairing rule: identical shapes, or rank-1 b spanning a's
// trailing dimension.
enum class PairKind { Same, TrailingBroadcast };

PairKind pair_kind(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) return PairKind::Same;
    if (b.shape().size() == 1 && b.shape()[0] == a.shape().back()) return PairKind::TrailingBroadcast;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    }
    const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = &bv[static_cast<std::size_t>(p) * n];
            double* orow = &out[static_cast<std::size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    Tensor res = Tensor::from_data({m, n}, std::move(out), wants_grad(a, b));
    if (res.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = res.node();
        Tape::active().record({"matmul", {an, bn}, on, [an, bn, on, m, k, n]() {
            const auto& g = on->adjoint;
            if (an->requires_grad) {
                auto& ga = detail::adjoint_of(*an);
                for (int i = 0; i < m; ++i) {
                    for (int p = 0; p < k; ++p) {
                        const double* grow = &g[static_cast<std::size_t>(i) * n];
                        const double* brow = &bn->value[static_cast<std::size_t>(p) * n];
                        double acc = 0.0;
                        for (int j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (bn->requires_grad) {
                auto& gb = detail::adjoint_of(*bn);
                for (int i = 0; i < m; ++i) {
                    const double* grow = &g[static_cast<std::size_t>(i) * n];
                    for (int p = 0; p < k; ++p) {
                        const double aip = an->value[i * k + p];
                        double* gbrow = &gb[static_cast<std::size_t>(p) * n];
                        for (int j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
                }
            }
        }});
    }
    return res;
}

Tensor transpose(const Tensor& a) {
    require_defined(a, "transpose");
    if (a.shape().size() != 2) {
        throw ShapeError("transpose: expected rank-2 tensor, got " + shape_str(a.shape()));
    }
    const int m = a.shape()[0], n = a.shape()[1];
    const auto& av = a.data();
    std::vector<double> out(av.size());
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = av[i * n + j];
    Tensor res = Tensor::from_data({n, m}, std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"transpose", {an}, on, [an, on, m, n]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            const auto& g = on->adjoint;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i) ga[i * n + j] += g[static_cast<std::size_t>(j) * m + i];
        }});
    }
    return res;
}

namespace {

// add/sub share everything except the sign applied to b.
Tensor add_like(const char* name, const Tensor& a, const Tensor& b, double sign) {
    require_defined(a, name);
    require_defined(b, name);
    const PairKind kind = pair_kind(name, a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(av.size());
    if (kind == PairKind::Same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
    } else {
        const std::size_t last = bv.size();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i % last];
    }
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a, b));
    if (res.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = res.node();
        Tape::active().record({name, {an, bn}, on, [an, bn, on, sign]() {
            const auto& g = on->adjoint;
            if (an->requires_grad) {
                auto& ga = detail::adjoint_of(*an);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (bn->requires_grad) {
                auto& gb = detail::adjoint_of(*bn);
                const std::size_t last = bn->value.size();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i % last] += sign * g[i];
            }
        }});
    }
    return res;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return add_like("add", a, b, 1.0);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return add_like("sub", a, b, -1.0);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    const PairKind kind = pair_kind("mul", a, b);
    const auto& av = a.data();
    const auto& bv = b.data();
    std::vector<double> out(av.size());
    const std::size_t last = bv.size();
    if (kind == PairKind::Same) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i % last];
    }
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a, b));
    if (res.requires_grad()) {
        NodePtr an = a.node(), bn = b.node(), on = res.node();
        const bool same = kind == PairKind::Same;
        Tape::active().record({"mul", {an, bn}, on, [an, bn, on, same]() {
            const auto& g = on->adjoint;
            const std::size_t last = bn->value.size();
            if (an->requires_grad) {
                auto& ga = detail::adjoint_of(*an);
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += g[i] * bn->value[same ? i : i % last];
            }
            if (bn->requires_grad) {
                auto& gb = detail::adjoint_of(*bn);
                for (std::size_t i = 0; i < g.size(); ++i)
                    gb[same ? i : i % last] += g[i] * an->value[i];
            }
        }});
    }
    return res;
}

Tensor scale(const Tensor& a, double c) {
    require_defined(a, "scale");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * c;
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"scale", {an}, on, [an, on, c]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->adjoint[i] * c;
        }});
    }
    return res;
}

Tensor add_scalar(const Tensor& a, double c) {
    require_defined(a, "add_scalar");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c;
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"add_scalar", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->adjoint[i];
        }});
    }
    return res;
}

Tensor relu(const Tensor& a) {
    require_defined(a, "relu");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"relu", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            // Gradient passes only where the input was strictly positive.
            const double slope = detail::corrupt_relu_backward ? 1.05 : 1.0;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i)
                if (an->value[i] > 0.0) ga[i] += on->adjoint[i] * slope;
        }});
    }
    return res;
}

Tensor exp(const Tensor& a) {
    require_defined(a, "exp");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"exp", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->adjoint[i] * on->value[i];
        }});
    }
    return res;
}

Tensor log(const Tensor& a) {
    require_defined(a, "log");
    std::vector<double> out(a.data().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(a.data()[i] > 0.0)) {
            throw ValueError("log: non-positive input " + std::to_string(a.data()[i]) +
                             " at flat index " + std::to_string(i));
        }
        out[i] = std::log(a.data()[i]);
    }
    Tensor res = Tensor::from_data(a.shape(), std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"log", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->adjoint[i] / an->value[i];
        }});
    }
    return res;
}

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    Tensor res = Tensor::from_data({1}, {acc}, wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"sum", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            const double g = on->adjoint[0];
            for (double& v : ga) v += g;
        }});
    }
    return res;
}

Tensor mean(const Tensor& a) {
    require_defined(a, "mean");
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor res = Tensor::from_data({1}, {acc * inv}, wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"mean", {an}, on, [an, on, inv]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            const double g = on->adjoint[0] * inv;
            for (double& v : ga) v += g;
        }});
    }
    return res;
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor res = Tensor::from_data(std::move(shape), a.data(), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"reshape", {an}, on, [an, on]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += on->adjoint[i];
        }});
    }
    return res;
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ValueError("concat: no parts given");
    std::vector<double> out;
    bool grads = false;
    for (const Tensor& p : parts) {
        require_defined(p, "concat");
        out.insert(out.end(), p.data().begin(), p.data().end());
        grads = grads || p.requires_grad();
    }
    const int total = static_cast<int>(out.size());
    Tensor res = Tensor::from_data({total}, std::move(out), grad_enabled() && grads);
    if (res.requires_grad()) {
        std::vector<NodePtr> nodes;
        nodes.reserve(parts.size());
        for (const Tensor& p : parts) nodes.push_back(p.node());
        NodePtr on = res.node();
        Tape::active().record({"concat", nodes, on, [nodes, on]() {
            std::size_t offset = 0;
            for (const NodePtr& n : nodes) {
                if (n->requires_grad) {
                    auto& gn = detail::adjoint_of(*n);
                    for (std::size_t i = 0; i < gn.size(); ++i) gn[i] += on->adjoint[offset + i];
                }
                offset += n->value.size();
            }
        }});
    }
    return res;
}

Tensor slice(const Tensor& a, int begin, int len) {
    require_defined(a, "slice");
    if (begin < 0 || len <= 0 || begin + len > a.numel()) {
        throw ShapeError("slice: window [" + std::to_string(begin) + ", " +
                         std::to_string(begin + len) + ") out of range for " +
                         shape_str(a.shape()));
    }
    std::vector<double> out(a.data().begin() + begin, a.data().begin() + begin + len);
    Tensor res = Tensor::from_data({len}, std::move(out), wants_grad(a));
    if (res.requires_grad()) {
        NodePtr an = a.node(), on = res.node();
        Tape::active().record({"slice", {an}, on, [an, on, begin]() {
            if (!an->requires_grad) return;
            auto& ga = detail::adjoint_of(*an);
            for (std::size_t i = 0; i < on->adjoint.size(); ++i) ga[begin + i] += on->adjoint[i];
        }});
    }
    return res;
}

Tensor log_softmax(const Tensor& logits) {
    require_defined(logits, "log_softmax");
    if (logits.shape().size() != 2 || logits.shape()[1] < 2) {
        throw ShapeError("log_softmax: expected [batch x classes] with classes >= 2, got " +
                         shape_str(logits.shape()));
    }
    const int b = logits.shape()[0], c = logits.shape()[1];
    const auto& x = logits.data();
    std::vector<double> out(x.size());
    for (int i = 0; i < b; ++i) {
        const double* row = &x[static_cast<std::size_t>(i) * c];
        double m = row[0];
        for (int j = 1; j < c; ++j) m = std::max(m, row[j]);
        double denom = 0.0;
        for (int j = 0; j < c; ++j) denom += std::exp(row[j] - m);
        const double lse = m + std::log(denom);
        for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] = row[j] - lse;
    }
    Tensor res = Tensor::from_data(logits.shape(), std::move(out), wants_grad(logits));
    if (res.requires_grad()) {
        NodePtr xn = logits.node(), on = res.node();
        Tape::active().record({"log_softmax", {xn}, on, [xn, on, b, c]() {
            if (!xn->requires_grad) return;
            auto& gx = detail::adjoint_of(*xn);
            for (int i = 0; i < b; ++i) {
                const double* grow = &on->adjoint[static_cast<std::size_t>(i) * c];
                const double* orow = &on->value[static_cast<std::size_t>(i) * c];
                double gsum = 0.0;
                for (int j = 0; j < c; ++j) gsum += grow[j];
                double* dst = &gx[static_cast<std::size_t>(i) * c];
                for (int j = 0; j < c; ++j) dst[j] += grow[j] - std::exp(orow[j]) * gsum;
            }
        }});
    }
    return res;
}

Tensor nll(const Tensor& log_probs, const std::vector<int>& labels) {
    require_defined(log_probs, "nll");
    if (log_probs.shape().size() != 2) {
        throw ShapeError("nll: expected [batch x classes], got " + shape_str(log_probs.shape()));
    }
    const int b = log_probs.shape()[0], c = log_probs.shape()[1];
    if (static_cast<int>(labels.size()) != b) {
        throw ShapeError("nll: batch " + std::to_string(b) + " vs " +
                         std::to_string(labels.size()) + " labels");
    }
    double acc = 0.0;
    for (int i = 0; i < b; ++i) {
        if (labels[i] < 0 || labels[i] >= c) {
            throw ValueError("nll: label " + std::to_string(labels[i]) + " out of range [0, " +
                             std::to_string(c) + ") at row " + std::to_string(i));
        }
        acc -= log_probs.data()[static_cast<std::size_t>(i) * c + labels[i]];
    }
    Tensor res = Tensor::from_data({1}, {acc / b}, wants_grad(log_probs));
    if (res.requires_grad()) {
        NodePtr ln = log_probs.node(), on = res.node();
        std::vector<int> y = labels;
        Tape::active().record({"nll", {ln}, on, [ln, on, y, b, c]() {
            if (!ln->requires_grad) return;
            auto& gl = detail::adjoint_of(*ln);
            const double g = on->adjoint[0] / b;
            for (int i = 0; i < b; ++i) gl[static_cast<std::size_t>(i) * c + y[i]] -= g;
        }});
    }
    return res;
}

namespace {

struct Lerp {
    int lo, hi;
    double w_hi;  // weight of hi; lo gets 1 - w_hi
};

// Half-pixel source coordinate for output index i, clamped to the edges.
Lerp lerp_coord(int i, int out_size, int in_size) {
    const double pos = (i + 0.5) * (static_cast<double>(in_size) / out_size) - 0.5;
    if (pos <= 0.0) return {0, 0, 0.0};
    if (pos >= in_size - 1) return {in_size - 1, in_size - 1, 0.0};
    const int lo = static_cast<int>(pos);
    return {lo, lo + 1, pos - lo};
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, int out_h, int out_w) {
    require_defined(image, "resize_bilinear");
    if (image.shape().size() != 3) {
        throw ShapeError("resize_bilinear: expected [channels x h x w], got " +
                         shape_str(image.shape()));
    }
    if (out_h <= 0 || out_w <= 0) {
        throw ValueError("resize_bilinear: non-positive output size " + std::to_string(out_h) +
                         "x" + std::to_string(out_w));
    }
    const int ch = image.shape()[0], h = image.shape()[1], w = image.shape()[2];
    std::vector<Lerp> ys(out_h), xs(out_w);
    for (int i = 0; i < out_h; ++i) ys[i] = lerp_coord(i, out_h, h);
    for (int j = 0; j < out_w; ++j) xs[j] = lerp_coord(j, out_w, w);

    const auto& src = image.data();
    std::vector<double> out(static_cast<std::size_t>(ch) * out_h * out_w);
    for (int k = 0; k < ch; ++k) {
        const double* plane = &src[static_cast<std::size_t>(k) * h * w];
        double* dst = &out[static_cast<std::size_t>(k) * out_h * out_w];
        for (int i = 0; i < out_h; ++i) {
            const Lerp& y = ys[i];
            for (int j = 0; j < out_w; ++j) {
                const Lerp& x = xs[j];
                const double top = plane[y.lo * w + x.lo] * (1 - x.w_hi) + plane[y.lo * w + x.hi] * x.w_hi;
                const double bot = plane[y.hi * w + x.lo] * (1 - x.w_hi) + plane[y.hi * w + x.hi] * x.w_hi;
                dst[i * out_w + j] = top * (1 - y.w_hi) + bot * y.w_hi;
            }
        }
    }
    Tensor res = Tensor::from_data({ch, out_h, out_w}, std::move(out), wants_grad(image));
    if (res.requires_grad()) {
        NodePtr in = image.node(), on = res.node();
        Tape::active().record({"resize_bilinear", {in}, on, [in, on, ys, xs, ch, h, w, out_h, out_w]() {
            if (!in->requires_grad) return;
            auto& gi = detail::adjoint_of(*in);
            for (int k = 0; k < ch; ++k) {
                double* plane = &gi[static_cast<std::size_t>(k) * h * w];
                const double* g = &on->adjoint[static_cast<std::size_t>(k) * out_h * out_w];
                for (int i = 0; i < out_h; ++i) {
                    const Lerp& y = ys[i];
                    for (int j = 0; j < out_w; ++j) {
                        const Lerp& x = xs[j];
                        const double gv = g[i * out_w + j];
                        plane[y.lo * w + x.lo] += gv * (1 - y.w_hi) * (1 - x.w_hi);
                        plane[y.lo * w + x.hi] += gv * (1 - y.w_hi) * x.w_hi;
                        plane[y.hi * w + x.lo] += gv * y.w_hi * (1 - x.w_hi);
                        plane[y.hi * w + x.hi] += gv * y.w_hi * x.w_hi;
                    }
                }
            }
        }});
    }
    return res;
}

Tensor detach(const Tensor& a) {
    require_defined(a, "detach");
    return Tensor::from_data(a.shape(), a.data(), false);
}

}  // namespace protohead
