#pragma once

#include <vector>

#include "protohead/model.hpp"
#include "protohead/tensor.hpp"

namespace protohead {

/// Mixing coefficients for the combined objective. `stability` scales the
/// response distillation term directly; the prototype distillation term gets
/// stability * sp_weight.
struct LossWeights {
    double stability = 0.5;
    double sp_weight = 1.0;

    double lambda_main_distill() const { return stability; }
    double lambda_proto_distill() const { return stability * sp_weight; }
};

/// Which prototype values the frozen teacher consumes in the prototype
/// distillation loss: the live bank's current values (default; only network
/// weights differ between teacher and student) or the teacher's own snapshot
/// copies.
enum class TeacherPrototypes { Live, Frozen };

/// Mean cross entropy of logits [batch x classes] against local labels.
Tensor hard_loss(const Tensor& logits, const std::vector<int>& labels);

/// Mean over the batch of KL(softmax(old/T) || softmax(new/T)). The old side
/// is detached: gradients flow only into new_logits.
Tensor kl_distill(const Tensor& old_logits, const Tensor& new_logits, double temperature = 1.0);

/// Response distillation on real inputs: average over previous tasks j of
/// KL between the frozen teacher's and the live model's logits for head j on
/// the current batch. Exactly zero for the first task.
Tensor soft_loss_main(const FrozenModel& teacher, const HyperHeadModel& model, const Tensor& x,
                      int task_id, double temperature = 1.0);

/// Prototype distillation: for each previous task j and each of its class
/// prototypes, KL between teacher and live logits for that prototype under
/// head j, summed over classes and averaged over previous tasks. Exactly
/// zero for the first task.
Tensor soft_loss_prototypes(const FrozenModel& teacher, const HyperHeadModel& model, int task_id,
                            TeacherPrototypes mode = TeacherPrototypes::Live,
                            double temperature = 1.0);

/// hard + stability * soft_main + stability * sp_weight * soft_proto.
/// Terms with a zero coefficient are skipped, so a zero stability returns
/// the hard loss unchanged.
Tensor total_loss(const Tensor& hard, const Tensor& soft_main, const Tensor& soft_proto,
                  const LossWeights& weights);

}  // namespace protohead
