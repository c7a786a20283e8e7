#pragma once

#include <string>
#include <vector>

#include "protohead/tensor.hpp"

namespace protohead {

struct OptimizerConfig {
    enum class Kind { Sgd, Adam };

    Kind kind = Kind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Updates exactly the parameters registered at construction. A parameter
/// with no populated gradient is treated as having a zero gradient.
class Optimizer {
  public:
    Optimizer(OptimizerConfig cfg, std::vector<Tensor> params);

    void step();
    void clear_grads();
    long step_count() const { return steps_; }
    const std::vector<Tensor>& params() const { return params_; }

  private:
    OptimizerConfig cfg_;
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    long steps_ = 0;
};

}  // namespace protohead
