#include "protohead/tensor.hpp"

#include <sstream>

namespace protohead {

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

int shape_numel(const Shape& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor: shape must have at least one dimension");
    for (int d : shape) {
        if (d <= 0) throw ShapeError("tensor: non-positive dimension in " + shape_str(shape));
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    validate_shape(shape);
    auto node = std::make_shared<TensorNode>();
    node->value.assign(static_cast<std::size_t>(shape_numel(shape)), 0.0);
    node->shape = std::move(shape);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& v : t.data()) v = fill;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    validate_shape(shape);
    if (static_cast<std::size_t>(shape_numel(shape)) != data.size()) {
        throw ShapeError("tensor: shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
    }
    auto node = std::make_shared<TensorNode>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::wrap(std::shared_ptr<TensorNode> node) {
    return Tensor(std::move(node));
}

const Shape& Tensor::shape() const {
    if (!defined()) throw ValueError("tensor: undefined handle");
    return node_->shape;
}

int Tensor::numel() const {
    return shape_numel(shape());
}

double Tensor::item() const {
    if (!defined() || numel() != 1) {
        throw ValueError("tensor: item() requires exactly one element, got " +
                         (defined() ? shape_str(shape()) : std::string("undefined")));
    }
    return node_->value[0];
}

std::vector<double>& Tensor::data() {
    if (!defined()) throw ValueError("tensor: undefined handle");
    return node_->value;
}

const std::vector<double>& Tensor::data() const {
    if (!defined()) throw ValueError("tensor: undefined handle");
    return node_->value;
}

bool Tensor::requires_grad() const {
    return defined() && node_->requires_grad;
}

void Tensor::set_requires_grad(bool on) {
    if (!defined()) throw ValueError("tensor: undefined handle");
    node_->requires_grad = on;
}

bool Tensor::has_grad() const {
    return defined() && !node_->grad.empty();
}

const std::vector<double>& Tensor::grad() const {
    if (!has_grad()) throw ValueError("tensor: gradient not populated");
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!defined()) return;
    for (double& g : node_->grad) g = 0.0;
}

void Tensor::clear_grad() {
    if (!defined()) return;
    node_->grad.clear();
}

Tensor Tensor::deep_copy() const {
    if (!defined()) return Tensor();
    return from_data(node_->shape, node_->value, node_->requires_grad);
}

}  // namespace protohead
