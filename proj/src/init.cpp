#include "drau/init.hpp"

#include <cmath>

#include "drau/errors.hpp"

namespace drau {

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  if (fan_in + fan_out == 0) throw ConfigError("glorot bound needs a non-empty fan");
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

std::pair<std::size_t, std::size_t> fans(const Shape& shape) {
  if (shape.size() < 2) throw ConfigError("fans need a tensor of rank >= 2, got " + shape_string(shape));
  std::size_t fan_in = 1;
  for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
  return {fan_in, shape.back()};
}

Tensor uniform_init(const Shape& shape, double bound, Rng& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(shape, std::move(values), requires_grad);
}

Tensor glorot_init(const Shape& shape, Rng& rng, bool requires_grad) {
  if (shape.size() < 2) return Tensor::zeros(shape, requires_grad);
  const auto [fan_in, fan_out] = fans(shape);
  return uniform_init(shape, glorot_bound(fan_in, fan_out), rng, requires_grad);
}

}  // namespace drau
