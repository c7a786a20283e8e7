#pragma once

#include <vector>

#include "protohead/tape.hpp"
#include "protohead/tensor.hpp"

namespace protohead {

// Differentiable primitives. Every op validates shapes eagerly, computes its
// value, and records a tape entry when gradients are enabled and at least one
// input requires them. Broadcasting is deliberately narrow: add/sub/mul accept
// either identical shapes or a rank-1 right operand matching the left
// operand's trailing dimension; anything else is a ShapeError naming both
// shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Natural log; non-positive entries are a ValueError.
Tensor log(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
/// Flattens each part and joins them into one rank-1 tensor.
Tensor concat(const std::vector<Tensor>& parts);
/// Rank-1 window [begin, begin+len) of the flattened input.
Tensor slice(const Tensor& a, int begin, int len);

/// Row-wise log softmax of a [batch x classes] tensor, classes >= 2.
/// Stable under large inputs via per-row max subtraction.
Tensor log_softmax(const Tensor& logits);

/// Mean negative log likelihood of the given class per row. `log_probs` is
/// [batch x classes]; labels are local class indices.
Tensor nll(const Tensor& log_probs, const std::vector<int>& labels);

/// Bilinear interpolation of a [channels x h x w] image to [channels x
/// out_h x out_w], half-pixel centers with edge clamping (align_corners
/// false). Linear in the input, so it is exactly differentiable.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

/// Value copy that never requires gradients and records nothing.
Tensor detach(const Tensor& a);

namespace detail {

/// Test fixture: when set, relu's backward is deliberately wrong so the
/// gradient-check harness can prove it reports failures.
extern bool corrupt_relu_backward;

}  // namespace detail

}  // namespace protohead
