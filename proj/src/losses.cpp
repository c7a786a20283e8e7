#include "protohead/losses.hpp"

#include <string>

#include "protohead/ops.hpp"

namespace protohead {

Tensor hard_loss(const Tensor& logits, const std::vector<int>& labels) {
    return nll(log_softmax(logits), labels);
}

Tensor kl_distill(const Tensor& old_logits, const Tensor& new_logits, double temperature) {
    if (!(temperature > 0.0)) {
        throw ValueError("kl_distill: temperature must be positive, got " +
                         std::to_string(temperature));
    }
    if (old_logits.shape() != new_logits.shape()) {
        throw ShapeError("kl_distill: logit shapes differ, " + shape_str(old_logits.shape()) +
                         " vs " + shape_str(new_logits.shape()));
    }
    const double inv_t = 1.0 / temperature;
    const Tensor old_lp = log_softmax(scale(detach(old_logits), inv_t));
    const Tensor new_lp = log_softmax(scale(new_logits, inv_t));
    const Tensor old_p = exp(old_lp);
    const int batch = old_logits.shape()[0];
    return scale(sum(mul(old_p, sub(old_lp, new_lp))), 1.0 / batch);
}

Tensor soft_loss_main(const FrozenModel& teacher, const HyperHeadModel& model, const Tensor& x,
                      int task_id, double temperature) {
    if (task_id < 1) throw ValueError("soft_loss_main: task ids start at 1");
    if (task_id == 1) return Tensor::scalar(0.0);

    const Tensor feats = model.features(x);
    Tensor acc;
    for (int j = 1; j < task_id; ++j) {
        if (!teacher.net().prototypes().has_task(j)) {
            throw UnknownTaskError("soft_loss_main: teacher snapshot lacks task " +
                                   std::to_string(j));
        }
        const Tensor old_logits = teacher.forward(x, j);
        const Tensor new_logits = apply_head(feats, model.head_for_task(j));
        const Tensor term = kl_distill(old_logits, new_logits, temperature);
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / (task_id - 1));
}

Tensor soft_loss_prototypes(const FrozenModel& teacher, const HyperHeadModel& model, int task_id,
                            TeacherPrototypes mode, double temperature) {
    if (task_id < 1) throw ValueError("soft_loss_prototypes: task ids start at 1");
    if (task_id == 1) return Tensor::scalar(0.0);

    const int classes = model.config().classes_per_task;
    Tensor acc;
    for (int j = 1; j < task_id; ++j) {
        if (!teacher.net().prototypes().has_task(j)) {
            throw UnknownTaskError("soft_loss_prototypes: teacher snapshot lacks task " +
                                   std::to_string(j));
        }
        const Tensor old_logits = mode == TeacherPrototypes::Live
                                      ? teacher.prototype_logits_from_bank(j, model.prototypes())
                                      : teacher.prototype_logits(j);
        const Tensor new_logits = model.prototype_logits(j);
        // kl_distill averages over the batch of `classes` prototypes; the
        // per-task contribution is the sum over classes.
        const Tensor term = scale(kl_distill(old_logits, new_logits, temperature),
                                  static_cast<double>(classes));
        acc = acc.defined() ? add(acc, term) : term;
    }
    return scale(acc, 1.0 / (task_id - 1));
}

Tensor total_loss(const Tensor& hard, const Tensor& soft_main, const Tensor& soft_proto,
                  const LossWeights& weights) {
    for (const Tensor* t : {&hard, &soft_main, &soft_proto}) {
        if (!t->defined() || t->numel() != 1) {
            throw ValueError("total_loss: every component must be a scalar");
        }
    }
    if (weights.stability < 0.0 || weights.sp_weight < 0.0) {
        throw ValueError("total_loss: negative loss weights");
    }
    Tensor out = hard;
    if (weights.lambda_main_distill() != 0.0) {
        out = add(out, scale(soft_main, weights.lambda_main_distill()));
    }
    if (weights.lambda_proto_distill() != 0.0) {
        out = add(out, scale(soft_proto, weights.lambda_proto_distill()));
    }
    return out;
}

}  // namespace protohead
