#include "drau/fusion.hpp"

#include <random>

#include "drau/errors.hpp"
#include "drau/fft.hpp"
#include "drau/ops.hpp"

namespace drau {

SketchParams SketchParams::random(std::size_t input_x, std::size_t input_y, std::size_t dim, std::uint64_t seed) {
  if (input_x == 0 || input_y == 0 || dim == 0) throw ConfigError("sketch dimensions must be positive");
  SketchParams p;
  p.input_x = input_x;
  p.input_y = input_y;
  p.dim = fft::next_power_of_two(dim);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> bucket(0, p.dim - 1);
  std::bernoulli_distribution coin(0.5);
  auto fill = [&](std::size_t n, std::vector<std::size_t>& h, std::vector<int>& s) {
    h.resize(n);
    s.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = bucket(rng);
      s[i] = coin(rng) ? 1 : -1;
    }
  };
  fill(input_x, p.hash_x, p.sign_x);
  fill(input_y, p.hash_y, p.sign_y);
  return p;
}

SketchParams SketchParams::from_tables(std::size_t dim, std::vector<std::size_t> hash_x, std::vector<int> sign_x,
                                       std::vector<std::size_t> hash_y, std::vector<int> sign_y) {
  if (dim == 0) throw ConfigError("sketch dimension must be positive");
  if (hash_x.size() != sign_x.size() || hash_y.size() != sign_y.size() || hash_x.empty() || hash_y.empty()) {
    throw ConfigError("sketch hash and sign tables must be non-empty and of equal length");
  }
  for (auto h : hash_x)
    if (h >= dim) throw ConfigError("sketch hash value out of range");
  for (auto h : hash_y)
    if (h >= dim) throw ConfigError("sketch hash value out of range");
  for (auto s : sign_x)
    if (s != 1 && s != -1) throw ConfigError("sketch signs must be +1 or -1");
  for (auto s : sign_y)
    if (s != 1 && s != -1) throw ConfigError("sketch signs must be +1 or -1");
  SketchParams p;
  p.input_x = hash_x.size();
  p.input_y = hash_y.size();
  p.dim = dim;
  p.hash_x = std::move(hash_x);
  p.hash_y = std::move(hash_y);
  p.sign_x = std::move(sign_x);
  p.sign_y = std::move(sign_y);
  return p;
}

namespace {

Shape with_trailing(const Shape& shape, std::size_t extent) {
  Shape out = shape;
  if (out.empty()) out.push_back(extent);
  out.back() = extent;
  return out;
}

void require_single_row(const Tensor& t, const char* op) {
  if (t.rank() == 0 || t.numel() != t.shape().back()) {
    throw DimensionError(std::string(op) + ": expected a vector or single row, got " + shape_string(t.shape()));
  }
}

}  // namespace

Tensor count_sketch(const Tensor& x, const SketchParams& params, SketchSide side) {
  require_single_row(x, "count_sketch");
  const auto& hash = side == SketchSide::x ? params.hash_x : params.hash_y;
  const auto& sign = side == SketchSide::x ? params.sign_x : params.sign_y;
  if (x.numel() != hash.size()) {
    throw DimensionError("count_sketch: input length " + std::to_string(x.numel()) + " but sketch expects " +
                         std::to_string(hash.size()));
  }
  const auto in = x.data();
  std::vector<double> out(params.dim, 0.0);
  for (std::size_t i = 0; i < in.size(); ++i) out[hash[i]] += sign[i] * in[i];
  return Tensor::make_op("count_sketch", with_trailing(x.shape(), params.dim), std::move(out), {x},
                         [hash, sign](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           auto& d = *gin[0];
                           for (std::size_t i = 0; i < hash.size(); ++i) d[i] += sign[i] * g[hash[i]];
                         });
}

Tensor circular_convolution(const Tensor& a, const Tensor& b) {
  require_single_row(a, "circular_convolution");
  require_single_row(b, "circular_convolution");
  if (a.numel() != b.numel()) {
    throw DimensionError("circular_convolution: lengths " + std::to_string(a.numel()) + " and " +
                         std::to_string(b.numel()) + " differ");
  }
  auto out = fft::circular_convolve(a.data(), b.data());
  return Tensor::make_op("circular_convolution", a.shape(), std::move(out), {a, b},
                         [a, b](std::span<const double> g, std::span<std::vector<double>*> gin) {
                           // z = a (*) b is bilinear: dL/da = g correlated with b, and symmetrically.
                           if (gin[0]) {
                             const auto da = fft::circular_correlate(g, b.data());
                             auto& d = *gin[0];
                             for (std::size_t i = 0; i < da.size(); ++i) d[i] += da[i];
                           }
                           if (gin[1]) {
                             const auto db = fft::circular_correlate(g, a.data());
                             auto& d = *gin[1];
                             for (std::size_t i = 0; i < db.size(); ++i) d[i] += db[i];
                           }
                         });
}

Tensor mcb_fuse(const Tensor& x, const Tensor& y, const FusionConfig& cfg) {
  if (cfg.kind != FusionKind::mcb) throw ConfigError("mcb_fuse called with a non-mcb fusion config");
  if (!fft::is_power_of_two(cfg.sketch.dim)) throw ConfigError("mcb sketch dimension must be a power of two");
  auto z = circular_convolution(count_sketch(x, cfg.sketch, SketchSide::x), count_sketch(y, cfg.sketch, SketchSide::y));
  if (cfg.signed_sqrt) z = signed_sqrt(z);
  if (cfg.l2_normalize) z = l2_normalize(z);
  return z;
}

Tensor fuse(const Tensor& x, const Tensor& y, const FusionConfig& cfg) {
  switch (cfg.kind) {
    case FusionKind::mcb:
      return mcb_fuse(x, y, cfg);
    case FusionKind::hadamard:
      if (x.shape() != y.shape()) {
        throw DimensionError("hadamard fusion needs equal shapes, got " + shape_string(x.shape()) + " and " +
                             shape_string(y.shape()));
      }
      return mul(x, y);
    case FusionKind::concat:
      return concat({x, y}, x.rank() - 1);
  }
  throw ConfigError("unknown fusion kind");
}

std::size_t fused_width(const FusionConfig& cfg, std::size_t width_x, std::size_t width_y) {
  switch (cfg.kind) {
    case FusionKind::mcb:
      return cfg.sketch.dim;
    case FusionKind::hadamard:
      return width_x;
    case FusionKind::concat:
      return width_x + width_y;
  }
  return 0;
}

}  // namespace drau
