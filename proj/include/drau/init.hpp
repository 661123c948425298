#pragma once

#include <utility>

#include "drau/random.hpp"
#include "drau/tensor.hpp"

namespace drau {

/// Glorot/Xavier uniform bound sqrt(6 / (fan_in + fan_out)).
double glorot_bound(std::size_t fan_in, std::size_t fan_out);

/// Fan-in/fan-out convention: a matrix [in x out] uses (in, out); higher ranks
/// use (product of all but the last extent, last extent).
std::pair<std::size_t, std::size_t> fans(const Shape& shape);

/// U(-a, a) with the Glorot bound for rank >= 2 shapes. Rank-0/1 tensors are
/// biases and start at zero.
Tensor glorot_init(const Shape& shape, Rng& rng, bool requires_grad = true);

Tensor uniform_init(const Shape& shape, double bound, Rng& rng, bool requires_grad = true);

}  // namespace drau
