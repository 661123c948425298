#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drau/tensor.hpp"

namespace drau {

/// Hash and sign tables of the two Count Sketch projections used by MCB.
struct SketchParams {
  std::size_t input_x = 0;
  std::size_t input_y = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> hash_x, hash_y;
  std::vector<int> sign_x, sign_y;
  std::uint64_t seed = 0;

  /// Draws uniform hashes into [0, dim) and uniform signs. `dim` is rounded up
  /// to a power of two so the FFT path applies.
  static SketchParams random(std::size_t input_x, std::size_t input_y, std::size_t dim, std::uint64_t seed);

  /// Explicit tables; throws ConfigError on inconsistent sizes or values.
  static SketchParams from_tables(std::size_t dim, std::vector<std::size_t> hash_x, std::vector<int> sign_x,
                                  std::vector<std::size_t> hash_y, std::vector<int> sign_y);
};

enum class SketchSide { x, y };

enum class FusionKind { mcb, hadamard, concat };

struct FusionConfig {
  FusionKind kind = FusionKind::mcb;
  SketchParams sketch;  // mcb only
  bool signed_sqrt = true;
  bool l2_normalize = true;
};

/// out[j] = sum over i with h(i) == j of s(i) * x[i]. The input may be a
/// vector or a single row; the trailing extent becomes the sketch dimension.
Tensor count_sketch(const Tensor& x, const SketchParams& params, SketchSide side);

/// Circular convolution of two equal-length signals via FFT, differentiable
/// in both arguments.
Tensor circular_convolution(const Tensor& a, const Tensor& b);

/// Multimodal compact bilinear pooling: FFT convolution of the two count
/// sketches followed by the configured signed square root and l2 normalization.
Tensor mcb_fuse(const Tensor& x, const Tensor& y, const FusionConfig& cfg);

/// Dispatches on cfg.kind: mcb, elementwise product, or concatenation.
Tensor fuse(const Tensor& x, const Tensor& y, const FusionConfig& cfg);

std::size_t fused_width(const FusionConfig& cfg, std::size_t width_x, std::size_t width_y);

}  // namespace drau
