#include "protohead/optimizer.hpp"

#include <cmath>

namespace protohead {

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Tensor> params)
    : cfg_(cfg), params_(std::move(params)) {
    if (!(cfg_.lr > 0.0)) throw ValueError("optimizer: learning rate must be positive");
    if (cfg_.kind == OptimizerConfig::Kind::Adam) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].data().size(), 0.0);
            v_[i].assign(params_[i].data().size(), 0.0);
        }
    }
}

void Optimizer::step() {
    ++steps_;
    if (cfg_.kind == OptimizerConfig::Kind::Sgd) {
        for (Tensor& p : params_) {
            if (!p.has_grad()) continue;
            const auto& g = p.grad();
            auto& w = p.data();
            for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.lr * g[i];
        }
        return;
    }

    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = params_[k];
        auto& w = p.data();
        auto& m = m_[k];
        auto& v = v_[k];
        const bool has = p.has_grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double g = has ? p.grad()[i] : 0.0;
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Optimizer::clear_grads() {
    for (Tensor& p : params_) p.clear_grad();
}

}  // namespace protohead
