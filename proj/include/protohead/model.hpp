#pragma once

#include <map>
#include <random>
#include <stdexcept>
#include <vector>

#include "protohead/datasets.hpp"
#include "protohead/ops.hpp"
#include "protohead/tensor.hpp"

namespace protohead {

struct UnknownTaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ModelConfig {
    ImageShape input{3, 16, 16};
    std::vector<int> hidden{256};
    int feature_dim = 64;
    int classes_per_task = 4;
    ImageShape prototype{3, 10, 10};
    int hypernet_hidden = 128;

    /// Length of the task embedding: all class prototypes flattened end to
    /// end, in class order.
    int embedding_dim() const { return classes_per_task * prototype.numel(); }
    /// Hypernetwork output size: one weight row plus one bias per class.
    int head_param_count() const { return classes_per_task * (feature_dim + 1); }

    bool operator==(const ModelConfig&) const = default;
};

struct LinearLayer {
    Tensor weight;  // [out x in]
    Tensor bias;    // [out]
};

/// x [batch x in] -> [batch x out].
Tensor linear(const Tensor& x, const LinearLayer& layer);

/// MLP trunk shared by every task: input -> hidden... -> feature_dim, relu
/// between layers, linear output.
struct Backbone {
    std::vector<LinearLayer> layers;
    int input_dim = 0;
    int feature_dim = 0;

    Tensor forward(const Tensor& x) const;
};

/// Generated classifier for one task.
struct HeadParams {
    Tensor weight;  // [classes x feature_dim]
    Tensor bias;    // [classes]
};

Tensor apply_head(const Tensor& features, const HeadParams& head);

/// Maps a task embedding to that task's head parameters. The final layer is
/// initialized near zero so freshly generated heads start near-uniform.
struct Hypernetwork {
    std::vector<LinearLayer> layers;
    int embedding_dim = 0;
    int classes = 0;
    int feature_dim = 0;

    HeadParams generate(const Tensor& embedding) const;
};

/// Learnable prototype image for one (task, class) pair.
struct Prototype {
    Tensor values;  // [channels x h x w], requires_grad
    int task_id = 0;
    int class_id = 0;
};

class PrototypeBank {
  public:
    /// Tasks must arrive with contiguous ids starting at 1, exactly
    /// `expected_classes` prototypes, in class order 0..C-1.
    void register_task(int task_id, std::vector<Prototype> protos, int expected_classes);

    bool has_task(int task_id) const { return tasks_.count(task_id) != 0; }
    int num_tasks() const { return static_cast<int>(tasks_.size()); }
    const std::vector<Prototype>& task(int task_id) const;
    std::vector<Prototype>& task(int task_id);

    /// Concatenation of the task's flattened prototypes in class order.
    Tensor task_embedding(int task_id) const;

    std::vector<Tensor> parameters() const;
    std::vector<Tensor> parameters_before(int task_id) const;

  private:
    std::map<int, std::vector<Prototype>> tasks_;
};

class HyperHeadModel {
  public:
    HyperHeadModel(ModelConfig cfg, std::mt19937_64& rng);

    const ModelConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return backbone_; }
    const Hypernetwork& hypernet() const { return hypernet_; }
    PrototypeBank& prototypes() { return bank_; }
    const PrototypeBank& prototypes() const { return bank_; }

    /// Backbone features for a [batch x input_numel] tensor.
    Tensor features(const Tensor& x) const;
    HeadParams head_for_task(int task_id) const;
    Tensor forward(const Tensor& x, int task_id) const;

    /// Logits of the task's own prototypes: each prototype is bilinearly
    /// upsampled to the input resolution and pushed through the backbone and
    /// the task's generated head. Result is [classes x classes].
    Tensor prototype_logits(int task_id) const;

    void register_task_prototypes(int task_id, std::vector<Prototype> protos);

    std::vector<Tensor> network_parameters() const;
    std::vector<Tensor> parameters() const;
    long parameter_count() const;

    HyperHeadModel clone() const;

  private:
    HyperHeadModel() = default;
    friend HyperHeadModel build_model_shell(const ModelConfig& cfg);

    ModelConfig cfg_;
    Backbone backbone_;
    Hypernetwork hypernet_;
    PrototypeBank bank_;
};

/// Model with the given dimensions and all parameters zero; used by the
/// checkpoint loader before filling values in.
HyperHeadModel build_model_shell(const ModelConfig& cfg);

/// Upsampled [classes x input_numel] batch of one task's prototypes.
Tensor prototype_input_batch(const PrototypeBank& bank, int task_id, const ImageShape& input);

/// Deep, gradient-free copy of a model taken at a task boundary. Forward
/// passes run without recording, so nothing in a snapshot ever receives a
/// gradient.
class FrozenModel {
  public:
    explicit FrozenModel(const HyperHeadModel& live);

    Tensor forward(const Tensor& x, int task_id) const;
    /// Prototype logits from this model's own (snapshot) bank.
    Tensor prototype_logits(int task_id) const;
    /// Prototype logits through the frozen networks but with prototype
    /// values taken from `bank` (normally the live bank).
    Tensor prototype_logits_from_bank(int task_id, const PrototypeBank& bank) const;

    const HyperHeadModel& net() const { return net_; }

  private:
    HyperHeadModel net_;
};

FrozenModel snapshot(const HyperHeadModel& model);

/// Prototype seeded from a uniformly random training image of the class,
/// bilinearly resized to the prototype shape, then standardized with the
/// given per-channel stats.
Prototype init_prototype_semantic(const TaskDataset& data, int class_id, std::mt19937_64& rng,
                                  const ChannelStats& stats, const ImageShape& proto_shape);

/// Prototype with N(0, 0.1^2) entries.
Prototype init_prototype_random(int task_id, int class_id, const ImageShape& proto_shape,
                                std::mt19937_64& rng);

}  // namespace protohead
