#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace protohead {

/// Raised when tensor shapes do not satisfy an operation's contract.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when values violate a contract (domain errors, non-scalar losses,
/// out-of-range labels, bad arguments).
struct ValueError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
int shape_numel(const Shape& shape);

/// Shared storage behind a Tensor handle.
///
/// `grad` is the persistent gradient buffer, empty until a backward pass
/// deposits into it. `adjoint` is scratch used by exactly one backward pass
/// and is always empty outside of Tape::backward.
struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> adjoint;
    bool requires_grad = false;
};

/// Dense n-dimensional array of doubles. Copying a Tensor aliases the
/// underlying node; use deep_copy() for an independent clone.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor wrap(std::shared_ptr<TensorNode> node);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int numel() const;
    bool is_scalar() const { return defined() && numel() == 1; }

    /// Value of a one-element tensor.
    double item() const;

    std::vector<double>& data();
    const std::vector<double>& data() const;

    bool requires_grad() const;
    void set_requires_grad(bool on);

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();
    void clear_grad();

    /// Independent copy of shape/value; keeps the requires_grad flag, drops
    /// any gradient.
    Tensor deep_copy() const;

    std::shared_ptr<TensorNode> node() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

    std::shared_ptr<TensorNode> node_;
};

}  // namespace protohead
