#include "protohead/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "protohead/ops.hpp"
#include "protohead/tape.hpp"

namespace protohead {

FreezeScope::FreezeScope(const std::vector<Tensor>& params) : params_(params) {
    prev_.reserve(params_.size());
    for (Tensor& t : params_) {
        prev_.push_back(t.requires_grad());
        t.set_requires_grad(false);
    }
}

FreezeScope::~FreezeScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) params_[i].set_requires_grad(prev_[i]);
}

double evaluate(const HyperHeadModel& model, const Tensor& inputs,
                const std::vector<int>& labels, int task_id) {
    if (inputs.shape().size() != 2 || inputs.shape()[0] != static_cast<int>(labels.size())) {
        throw ShapeError("evaluate: inputs " + shape_str(inputs.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
    }
    NoGradGuard ng;
    const int n = inputs.shape()[0];
    const int dim = inputs.shape()[1];
    const int classes = model.config().classes_per_task;
    const int chunk = 256;
    int correct = 0;
    for (int start = 0; start < n; start += chunk) {
        const int count = std::min(chunk, n - start);
        std::vector<double> block(inputs.data().begin() + static_cast<std::size_t>(start) * dim,
                                  inputs.data().begin() + static_cast<std::size_t>(start + count) * dim);
        const Tensor x = Tensor::from_data({count, dim}, std::move(block));
        const Tensor logits = model.forward(x, task_id);
        for (int i = 0; i < count; ++i) {
            const double* row = &logits.data()[static_cast<std::size_t>(i) * classes];
            int best = 0;
            for (int c = 1; c < classes; ++c) {
                if (row[c] > row[best]) best = c;
            }
            if (best == labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / n;
}

namespace {

ModelConfig model_config_from_run(const RunConfig& cfg, const ImageShape& input) {
    ModelConfig mc;
    mc.input = input;
    mc.hidden = cfg.model.hidden;
    mc.feature_dim = cfg.model.feature_dim;
    mc.classes_per_task = cfg.dataset.classes_per_task;
    mc.prototype = {input.channels, cfg.model.proto_height, cfg.model.proto_width};
    mc.hypernet_hidden = cfg.model.hypernet_hidden;
    return mc;
}

OptimizerConfig optimizer_config(const OptimConfig& oc, double lr) {
    OptimizerConfig c;
    c.kind = oc.kind == "sgd" ? OptimizerConfig::Kind::Sgd : OptimizerConfig::Kind::Adam;
    c.lr = lr;
    c.beta1 = oc.beta1;
    c.beta2 = oc.beta2;
    c.eps = oc.eps;
    return c;
}

void check_finite(const Tensor& loss, long step, const char* phase, int task) {
    const double v = loss.item();
    if (!std::isfinite(v)) {
        throw DivergenceError(step, std::string("trainer: non-finite ") + phase + " loss " +
                                        std::to_string(v) + " at step " + std::to_string(step) +
                                        " (task " + std::to_string(task) + ")");
    }
}

const std::vector<TaskDataset>& validate_tasks(const RunConfig& cfg,
                                               const std::vector<TaskDataset>& tasks) {
    if (tasks.empty()) throw ProtocolError("trainer: empty task list");
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].task_id != static_cast<int>(i) + 1) {
            throw ProtocolError("trainer: task ids must be contiguous from 1, got " +
                                std::to_string(tasks[i].task_id) + " at position " +
                                std::to_string(i));
        }
        if (!(tasks[i].shape == tasks[0].shape)) {
            throw ProtocolError("trainer: mixed image shapes across tasks");
        }
        if (static_cast<int>(tasks[i].class_ids.size()) != cfg.dataset.classes_per_task) {
            throw ProtocolError("trainer: task " + std::to_string(tasks[i].task_id) + " has " +
                                std::to_string(tasks[i].class_ids.size()) + " classes, expected " +
                                std::to_string(cfg.dataset.classes_per_task));
        }
    }
    return tasks;
}

}  // namespace

SequenceTrainer::SequenceTrainer(const RunConfig& cfg, std::vector<TaskDataset> tasks)
    : cfg_(cfg),
      tasks_(std::move(tasks)),
      rng_(cfg.seed),
      // Input normalization reuses the first task's train statistics for the
      // whole sequence, so later tasks never shift the representation scale.
      input_stats_(validate_tasks(cfg_, tasks_)[0].stats),
      model_(model_config_from_run(cfg_, tasks_[0].shape), rng_),
      matrix_(static_cast<int>(tasks_.size())) {
    prepared_.reserve(tasks_.size());
    const int dim = tasks_[0].shape.numel();
    for (const TaskDataset& t : tasks_) {
        PreparedTask p;
        auto pack = [&](const std::vector<Sample>& split, Tensor& out, std::vector<int>& labels) {
            std::vector<double> rows;
            rows.reserve(split.size() * static_cast<std::size_t>(dim));
            for (const Sample& s : split) {
                const auto norm = normalize_pixels(s.pixels, t.shape, input_stats_);
                rows.insert(rows.end(), norm.begin(), norm.end());
                labels.push_back(s.label);
            }
            out = Tensor::from_data({static_cast<int>(split.size()), dim}, std::move(rows));
        };
        pack(t.train, p.train_inputs, p.train_labels);
        pack(t.test, p.test_inputs, p.test_labels);
        prepared_.push_back(std::move(p));
    }
}

Tensor SequenceTrainer::gather_rows(const Tensor& rows, const std::vector<int>& order, int begin,
                                    int count) const {
    const int dim = rows.shape()[1];
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(count) * dim);
    for (int i = 0; i < count; ++i) {
        const auto first = rows.data().begin() + static_cast<std::size_t>(order[begin + i]) * dim;
        out.insert(out.end(), first, first + dim);
    }
    return Tensor::from_data({count, dim}, std::move(out));
}

void SequenceTrainer::observe(StepPhase phase, bool after) {
    if (step_observer_) step_observer_(model_, {phase, current_task_, steps_, after});
}

void SequenceTrainer::train_task(int task_id) {
    if (task_id != next_task_) {
        throw ProtocolError("trainer: task " + std::to_string(task_id) +
                            " out of order, expected " + std::to_string(next_task_));
    }
    if (task_id > num_tasks()) throw ProtocolError("trainer: no such task in schedule");
    if (task_id >= 2 && !frozen_.has_value()) {
        throw ProtocolError("trainer: task " + std::to_string(task_id) +
                            " needs a snapshot of the previous model");
    }
    const TaskDataset& data = tasks_[task_id - 1];
    const PreparedTask& prep = prepared_[task_id - 1];
    current_task_ = task_id;

    const ImageShape proto_shape{data.shape.channels, cfg_.model.proto_height,
                                 cfg_.model.proto_width};
    const long params_before = model_.parameter_count();
    std::vector<Prototype> protos;
    protos.reserve(cfg_.dataset.classes_per_task);
    for (int c = 0; c < cfg_.dataset.classes_per_task; ++c) {
        protos.push_back(cfg_.proto_init == "random"
                             ? init_prototype_random(task_id, c, proto_shape, rng_)
                             : init_prototype_semantic(data, c, rng_, input_stats_, proto_shape));
    }
    model_.register_task_prototypes(task_id, std::move(protos));
    const long growth = model_.parameter_count() - params_before;
    const long expected = static_cast<long>(cfg_.dataset.classes_per_task) * proto_shape.numel();
    if (growth != expected) {
        throw ProtocolError("trainer: task " + std::to_string(task_id) + " grew the model by " +
                            std::to_string(growth) + " parameters, expected " +
                            std::to_string(expected));
    }

    std::vector<Tensor> main_params = model_.network_parameters();
    for (const Prototype& p : model_.prototypes().task(task_id)) main_params.push_back(p.values);
    const std::vector<Tensor> past_protos = model_.prototypes().parameters_before(task_id);
    std::vector<Tensor> frozen_during_proto = model_.network_parameters();
    for (const Prototype& p : model_.prototypes().task(task_id)) {
        frozen_during_proto.push_back(p.values);
    }

    Optimizer main_opt(optimizer_config(cfg_.optim, cfg_.optim.lr), main_params);
    Optimizer proto_opt(optimizer_config(cfg_.optim, cfg_.optim.proto_lr), past_protos);

    const LossWeights weights{cfg_.loss.stability, cfg_.loss.sp_weight};
    const double temp = cfg_.loss.temperature;
    const TeacherPrototypes teacher_mode = cfg_.loss.proto_teacher == "frozen"
                                               ? TeacherPrototypes::Frozen
                                               : TeacherPrototypes::Live;
    const bool distill_main = task_id >= 2 && weights.lambda_main_distill() > 0.0;
    const bool distill_proto = task_id >= 2 && weights.lambda_proto_distill() > 0.0 &&
                               !past_protos.empty();

    const int n = static_cast<int>(prep.train_labels.size());
    const int batch_size = std::min(cfg_.train.batch_size, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    Tape& tape = Tape::active();
    for (int epoch = 1; epoch <= cfg_.train.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng_);
        double sum_hard = 0.0, sum_main = 0.0, sum_proto = 0.0;
        int batches = 0;
        for (int begin = 0; begin + batch_size <= n; begin += batch_size) {
            const Tensor x = gather_rows(prep.train_inputs, order, begin, batch_size);
            std::vector<int> y(batch_size);
            for (int i = 0; i < batch_size; ++i) y[i] = prep.train_labels[order[begin + i]];

            // MAIN step: hard loss plus response distillation. Previous
            // tasks' prototypes must come through bit-identical.
            {
                FreezeScope freeze(past_protos);
                ++steps_;
                observe(StepPhase::Main, false);
                main_opt.clear_grads();
                const Tensor l_hard = hard_loss(model_.forward(x, task_id), y);
                Tensor objective = l_hard;
                double main_val = 0.0;
                if (distill_main) {
                    const Tensor l_main = soft_loss_main(*frozen_, model_, x, task_id, temp);
                    main_val = l_main.item();
                    objective = add(objective, scale(l_main, weights.lambda_main_distill()));
                }
                check_finite(objective, steps_, "main", task_id);
                tape.backward(objective);
                main_opt.step();
                tape.clear();
                observe(StepPhase::Main, true);
                sum_hard += l_hard.item();
                sum_main += main_val;
            }

            // PROTO step: prototype distillation only; the networks and the
            // current task's prototypes are frozen, so only previous tasks'
            // prototype values can move.
            if (distill_proto) {
                FreezeScope freeze(frozen_during_proto);
                ++steps_;
                observe(StepPhase::Proto, false);
                proto_opt.clear_grads();
                const Tensor l_proto =
                    soft_loss_prototypes(*frozen_, model_, task_id, teacher_mode, temp);
                const Tensor objective = scale(l_proto, weights.lambda_proto_distill());
                check_finite(objective, steps_, "proto", task_id);
                tape.backward(objective);
                proto_opt.step();
                tape.clear();
                observe(StepPhase::Proto, true);
                sum_proto += l_proto.item();
            }
            ++batches;
        }
        if (epoch_sink_ && batches > 0) {
            EpochEvent ev;
            ev.task = task_id;
            ev.epoch = epoch;
            ev.hard = sum_hard / batches;
            ev.soft_main = sum_main / batches;
            ev.soft_proto = sum_proto / batches;
            ev.total = ev.hard + weights.lambda_main_distill() * ev.soft_main +
                       weights.lambda_proto_distill() * ev.soft_proto;
            epoch_sink_(ev);
        }
    }
    current_task_ = 0;
    next_task_ = task_id + 1;
}

void SequenceTrainer::finish_task(int task_id) {
    if (task_id != next_task_ - 1) {
        throw ProtocolError("trainer: finish_task(" + std::to_string(task_id) +
                            ") does not match last trained task");
    }
    frozen_.emplace(model_);
    for (int j = 1; j <= task_id; ++j) matrix_.set(task_id, j, evaluate_task(j));
}

const AccuracyMatrix& SequenceTrainer::run() {
    for (int k = 1; k <= num_tasks(); ++k) {
        train_task(k);
        finish_task(k);
    }
    return matrix_;
}

double SequenceTrainer::evaluate_task(int task_id) const {
    if (task_id < 1 || task_id > num_tasks()) {
        throw ProtocolError("trainer: cannot evaluate unknown task " + std::to_string(task_id));
    }
    const PreparedTask& prep = prepared_[task_id - 1];
    return evaluate(model_, prep.test_inputs, prep.test_labels, task_id);
}

}  // namespace protohead
