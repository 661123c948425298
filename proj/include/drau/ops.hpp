#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "drau/tensor.hpp"

namespace drau {

// Differentiable tensor operations. Unless noted otherwise, binary
// elementwise ops accept either equal shapes or a right operand whose element
// count equals the trailing extent of the left operand (broadcast over all
// leading axes, e.g. a bias row).

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// y = x for x > 0, slope * x otherwise. `slope` holds one value per channel
/// (trailing axis) or a single shared value. At x == 0 the positive branch is
/// used for the subgradient.
Tensor prelu(const Tensor& x, const Tensor& slope);

/// sign(x) * sqrt(|x|); the gradient at exactly 0 is taken to be 0.
Tensor signed_sqrt(const Tensor& x);

/// Softmax along `axis` with max subtraction. When given, `mask` has one entry
/// per position along `axis` (nonzero = keep); masked positions are exactly 0.
Tensor softmax(const Tensor& x, std::size_t axis, std::span<const std::uint8_t> mask = {});

/// x / (||x||_2 + 1e-12) over the whole tensor.
Tensor l2_normalize(const Tensor& x);
/// Same, independently for every slice along `axis` (e.g. axis 1 = per row).
Tensor l2_normalize(const Tensor& x, std::size_t axis);

Tensor concat(std::span<const Tensor> xs, std::size_t axis);
inline Tensor concat(std::initializer_list<Tensor> xs, std::size_t axis) {
  return concat(std::span<const Tensor>(xs.begin(), xs.size()), axis);
}
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
/// Repeats size-1 axes of `x` to reach `shape` (ranks must agree).
Tensor broadcast_to(const Tensor& x, const Shape& shape);

/// Sum of all elements as a scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Reductions along one axis; the axis is kept with extent 1.
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);

/// Rows of a [V x E] table selected by ids; out-of-range ids raise LookupError.
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

/// Elementwise product with a constant (non-differentiable) multiplier.
Tensor mul_constant(const Tensor& x, std::vector<double> multiplier);

/// -log softmax(logits)[target] over a logits vector, computed with log-sum-exp.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t target);

}  // namespace drau
