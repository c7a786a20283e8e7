#include "protohead/model.hpp"

#include <cmath>
#include <string>

namespace protohead {

Tensor linear(const Tensor& x, const LinearLayer& layer) {
    return add(matmul(x, transpose(layer.weight)), layer.bias);
}

Tensor Backbone::forward(const Tensor& x) const {
    if (x.shape().size() != 2 || x.shape()[1] != input_dim) {
        throw ShapeError("backbone: expected [batch x " + std::to_string(input_dim) + "], got " +
                         shape_str(x.shape()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = linear(h, layers[i]);
        if (i + 1 < layers.size()) h = relu(h);
    }
    return h;
}

Tensor apply_head(const Tensor& features, const HeadParams& head) {
    return add(matmul(features, transpose(head.weight)), head.bias);
}

HeadParams Hypernetwork::generate(const Tensor& embedding) const {
    if (embedding.shape().size() != 1 || embedding.shape()[0] != embedding_dim) {
        throw ShapeError("hypernet: expected embedding [" + std::to_string(embedding_dim) +
                         "], got " + shape_str(embedding.shape()));
    }
    Tensor h = reshape(embedding, {1, embedding_dim});
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = linear(h, layers[i]);
        if (i + 1 < layers.size()) h = relu(h);
    }
    Tensor flat = reshape(h, {classes * (feature_dim + 1)});
    HeadParams head;
    head.weight = reshape(slice(flat, 0, classes * feature_dim), {classes, feature_dim});
    head.bias = slice(flat, classes * feature_dim, classes);
    return head;
}

void PrototypeBank::register_task(int task_id, std::vector<Prototype> protos,
                                  int expected_classes) {
    if (task_id != num_tasks() + 1) {
        throw UnknownTaskError("prototype bank: task " + std::to_string(task_id) +
                               " breaks contiguous registration after " +
                               std::to_string(num_tasks()) + " tasks");
    }
    if (static_cast<int>(protos.size()) != expected_classes) {
        throw ValueError("prototype bank: task " + std::to_string(task_id) + " brings " +
                         std::to_string(protos.size()) + " prototypes, expected " +
                         std::to_string(expected_classes));
    }
    for (int c = 0; c < expected_classes; ++c) {
        if (protos[c].class_id != c || protos[c].task_id != task_id) {
            throw ValueError("prototype bank: prototype ids out of order for task " +
                             std::to_string(task_id));
        }
    }
    tasks_.emplace(task_id, std::move(protos));
}

const std::vector<Prototype>& PrototypeBank::task(int task_id) const {
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) {
        throw UnknownTaskError("prototype bank: no task " + std::to_string(task_id));
    }
    return it->second;
}

std::vector<Prototype>& PrototypeBank::task(int task_id) {
    const auto it = tasks_.find(task_id);
    if (it == tasks_.end()) {
        throw UnknownTaskError("prototype bank: no task " + std::to_string(task_id));
    }
    return it->second;
}

Tensor PrototypeBank::task_embedding(int task_id) const {
    const auto& protos = task(task_id);
    std::vector<Tensor> parts;
    parts.reserve(protos.size());
    for (const Prototype& p : protos) parts.push_back(p.values);
    return concat(parts);
}

std::vector<Tensor> PrototypeBank::parameters() const {
    std::vector<Tensor> out;
    for (const auto& [id, protos] : tasks_) {
        (void)id;
        for (const Prototype& p : protos) out.push_back(p.values);
    }
    return out;
}

std::vector<Tensor> PrototypeBank::parameters_before(int task_id) const {
    std::vector<Tensor> out;
    for (const auto& [id, protos] : tasks_) {
        if (id >= task_id) break;
        for (const Prototype& p : protos) out.push_back(p.values);
    }
    return out;
}

namespace {

LinearLayer make_linear(int in, int out, double weight_std, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, weight_std);
    std::vector<double> w(static_cast<std::size_t>(out) * in);
    for (double& v : w) v = gauss(rng);
    LinearLayer layer;
    layer.weight = Tensor::from_data({out, in}, std::move(w), true);
    layer.bias = Tensor::zeros({out}, true);
    return layer;
}

LinearLayer zero_linear(int in, int out) {
    LinearLayer layer;
    layer.weight = Tensor::zeros({out, in}, true);
    layer.bias = Tensor::zeros({out}, true);
    return layer;
}

void validate_config(const ModelConfig& cfg) {
    if (cfg.feature_dim < 1 || cfg.classes_per_task < 2 || cfg.hypernet_hidden < 1) {
        throw ValueError("model config: need feature_dim >= 1, classes >= 2, hypernet hidden >= 1");
    }
    if (cfg.prototype.channels != cfg.input.channels) {
        throw ValueError("model config: prototype channels " +
                         std::to_string(cfg.prototype.channels) + " must match input channels " +
                         std::to_string(cfg.input.channels));
    }
    for (int h : cfg.hidden) {
        if (h < 1) throw ValueError("model config: non-positive hidden size");
    }
}

}  // namespace

HyperHeadModel::HyperHeadModel(ModelConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
    validate_config(cfg_);
    backbone_.input_dim = cfg_.input.numel();
    backbone_.feature_dim = cfg_.feature_dim;
    int in = backbone_.input_dim;
    for (int h : cfg_.hidden) {
        backbone_.layers.push_back(make_linear(in, h, std::sqrt(2.0 / in), rng));
        in = h;
    }
    backbone_.layers.push_back(make_linear(in, cfg_.feature_dim, std::sqrt(2.0 / in), rng));

    hypernet_.embedding_dim = cfg_.embedding_dim();
    hypernet_.classes = cfg_.classes_per_task;
    hypernet_.feature_dim = cfg_.feature_dim;
    hypernet_.layers.push_back(make_linear(hypernet_.embedding_dim, cfg_.hypernet_hidden,
                                           std::sqrt(2.0 / hypernet_.embedding_dim), rng));
    // Near-zero final layer keeps freshly generated heads close to uniform.
    hypernet_.layers.push_back(make_linear(cfg_.hypernet_hidden, cfg_.head_param_count(), 0.01, rng));
}

HyperHeadModel build_model_shell(const ModelConfig& cfg) {
    validate_config(cfg);
    HyperHeadModel m;
    m.cfg_ = cfg;
    m.backbone_.input_dim = cfg.input.numel();
    m.backbone_.feature_dim = cfg.feature_dim;
    int in = m.backbone_.input_dim;
    for (int h : cfg.hidden) {
        m.backbone_.layers.push_back(zero_linear(in, h));
        in = h;
    }
    m.backbone_.layers.push_back(zero_linear(in, cfg.feature_dim));
    m.hypernet_.embedding_dim = cfg.embedding_dim();
    m.hypernet_.classes = cfg.classes_per_task;
    m.hypernet_.feature_dim = cfg.feature_dim;
    m.hypernet_.layers.push_back(zero_linear(m.hypernet_.embedding_dim, cfg.hypernet_hidden));
    m.hypernet_.layers.push_back(zero_linear(cfg.hypernet_hidden, cfg.head_param_count()));
    return m;
}

Tensor HyperHeadModel::features(const Tensor& x) const {
    return backbone_.forward(x);
}

HeadParams HyperHeadModel::head_for_task(int task_id) const {
    return hypernet_.generate(bank_.task_embedding(task_id));
}

Tensor HyperHeadModel::forward(const Tensor& x, int task_id) const {
    return apply_head(features(x), head_for_task(task_id));
}

Tensor prototype_input_batch(const PrototypeBank& bank, int task_id, const ImageShape& input) {
    const auto& protos = bank.task(task_id);
    std::vector<Tensor> rows;
    rows.reserve(protos.size());
    for (const Prototype& p : protos) {
        rows.push_back(resize_bilinear(p.values, input.height, input.width));
    }
    return reshape(concat(rows), {static_cast<int>(protos.size()), input.numel()});
}

Tensor HyperHeadModel::prototype_logits(int task_id) const {
    const Tensor batch = prototype_input_batch(bank_, task_id, cfg_.input);
    return apply_head(features(batch), head_for_task(task_id));
}

void HyperHeadModel::register_task_prototypes(int task_id, std::vector<Prototype> protos) {
    for (const Prototype& p : protos) {
        if (!(p.values.shape() == Shape{cfg_.prototype.channels, cfg_.prototype.height,
                                        cfg_.prototype.width})) {
            throw ShapeError("model: prototype shape " + shape_str(p.values.shape()) +
                             " does not match configured " +
                             shape_str({cfg_.prototype.channels, cfg_.prototype.height,
                                        cfg_.prototype.width}));
        }
    }
    bank_.register_task(task_id, std::move(protos), cfg_.classes_per_task);
}

std::vector<Tensor> HyperHeadModel::network_parameters() const {
    std::vector<Tensor> out;
    for (const LinearLayer& l : backbone_.layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    for (const LinearLayer& l : hypernet_.layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

std::vector<Tensor> HyperHeadModel::parameters() const {
    std::vector<Tensor> out = network_parameters();
    for (const Tensor& t : bank_.parameters()) out.push_back(t);
    return out;
}

long HyperHeadModel::parameter_count() const {
    long n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
}

HyperHeadModel HyperHeadModel::clone() const {
    HyperHeadModel copy = build_model_shell(cfg_);
    const auto src = parameters();
    auto dst = copy.network_parameters();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].data() = src[i].data();
    for (int task = 1; task <= bank_.num_tasks(); ++task) {
        std::vector<Prototype> protos;
        for (const Prototype& p : bank_.task(task)) {
            protos.push_back({p.values.deep_copy(), p.task_id, p.class_id});
        }
        copy.bank_.register_task(task, std::move(protos), cfg_.classes_per_task);
    }
    return copy;
}

FrozenModel::FrozenModel(const HyperHeadModel& live) : net_(live.clone()) {
    for (Tensor& t : net_.parameters()) {
        t.set_requires_grad(false);
        t.clear_grad();
    }
}

Tensor FrozenModel::forward(const Tensor& x, int task_id) const {
    NoGradGuard ng;
    return net_.forward(x, task_id);
}

Tensor FrozenModel::prototype_logits(int task_id) const {
    NoGradGuard ng;
    return net_.prototype_logits(task_id);
}

Tensor FrozenModel::prototype_logits_from_bank(int task_id, const PrototypeBank& bank) const {
    NoGradGuard ng;
    const Tensor batch = prototype_input_batch(bank, task_id, net_.config().input);
    return apply_head(net_.features(batch),
                      net_.hypernet().generate(bank.task_embedding(task_id)));
}

FrozenModel snapshot(const HyperHeadModel& model) {
    return FrozenModel(model);
}

Prototype init_prototype_semantic(const TaskDataset& data, int class_id, std::mt19937_64& rng,
                                  const ChannelStats& stats, const ImageShape& proto_shape) {
    std::vector<int> candidates;
    for (std::size_t i = 0; i < data.train.size(); ++i) {
        if (data.train[i].label == class_id) candidates.push_back(static_cast<int>(i));
    }
    if (candidates.empty()) {
        throw ValueError("prototype init: task " + std::to_string(data.task_id) +
                         " has no training samples for class " + std::to_string(class_id));
    }
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const Sample& chosen = data.train[candidates[pick(rng)]];

    NoGradGuard ng;
    const Tensor image = Tensor::from_data(
        {data.shape.channels, data.shape.height, data.shape.width}, chosen.pixels);
    Tensor small = resize_bilinear(image, proto_shape.height, proto_shape.width);
    const ImageShape small_shape{data.shape.channels, proto_shape.height, proto_shape.width};
    Tensor values = Tensor::from_data(small.shape(),
                                      normalize_pixels(small.data(), small_shape, stats), true);
    return {values, data.task_id, class_id};
}

Prototype init_prototype_random(int task_id, int class_id, const ImageShape& proto_shape,
                                std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 0.1);
    std::vector<double> v(static_cast<std::size_t>(proto_shape.numel()));
    for (double& x : v) x = gauss(rng);
    Tensor values = Tensor::from_data({proto_shape.channels, proto_shape.height, proto_shape.width},
                                      std::move(v), true);
    return {values, task_id, class_id};
}

}  // namespace protohead
