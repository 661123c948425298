#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <random>

#include "drau/autograd.hpp"
#include "drau/errors.hpp"
#include "drau/fft.hpp"
#include "drau/fusion.hpp"
#include "drau/ops.hpp"
#include "drau/random.hpp"

using namespace drau;

namespace {

Tensor random_vector(std::size_t n, Rng& rng, bool grad = false, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor::vector(std::move(v), grad);
}

FusionConfig raw_mcb(const SketchParams& s) {
  FusionConfig c;
  c.sketch = s;
  c.signed_sqrt = false;
  c.l2_normalize = false;
  return c;
}

// Count sketch of the explicit outer product under the pair hash
// h(i,j) = (h_x(i) + h_y(j)) mod d and sign s_x(i) s_y(j).
std::vector<double> outer_product_sketch(const Tensor& x, const Tensor& y, const SketchParams& s) {
  std::vector<double> out(s.dim, 0.0);
  for (std::size_t i = 0; i < x.numel(); ++i)
    for (std::size_t j = 0; j < y.numel(); ++j)
      out[(s.hash_x[i] + s.hash_y[j]) % s.dim] += s.sign_x[i] * s.sign_y[j] * x.at(i) * y.at(j);
  return out;
}

}  // namespace

TEST(FFT, RoundTripUpTo4096) {
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  for (std::size_t n = 1; n <= 4096; n *= 2) {
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    const auto back = fft::inverse_real(fft::forward_real(v));
    for (std::size_t i = 0; i < n; ++i) ASSERT_NEAR(back[i], v[i], 1e-10) << n;
  }
}

TEST(FFT, ConvolutionMatchesDirectSum) {
  Rng rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> a(16), b(16);
  for (auto& x : a) x = u(rng);
  for (auto& x : b) x = u(rng);
  const auto z = fft::circular_convolve(a, b);
  const auto c = fft::circular_correlate(a, b);
  for (std::size_t k = 0; k < 16; ++k) {
    double conv = 0, corr = 0;
    for (std::size_t i = 0; i < 16; ++i) {
      conv += a[i] * b[(k + 16 - i) % 16];
      corr += a[i] * b[(i + 16 - k) % 16];
    }
    EXPECT_NEAR(z[k], conv, 1e-12);
    EXPECT_NEAR(c[k], corr, 1e-12);
  }
  EXPECT_FALSE(fft::is_power_of_two(12));
  EXPECT_EQ(fft::next_power_of_two(12), 16u);
}

TEST(CountSketch, HandEvaluatedExample) {
  auto s = SketchParams::from_tables(4, {0, 0, 2, 3}, {1, -1, 1, 1}, {0, 1, 2, 3}, {1, 1, 1, 1});
  const auto out = count_sketch(Tensor::vector({3, 5, 7, 2}), s, SketchSide::x);
  EXPECT_EQ(out.to_vector(), (std::vector<double>{-2, 0, 7, 2}));
}

TEST(CountSketch, IdentityAndLinearity) {
  auto id = SketchParams::from_tables(4, {0, 1, 2, 3}, {1, 1, 1, 1}, {0, 1, 2, 3}, {1, 1, 1, 1});
  auto v = Tensor::vector({1.5, -2, 3, 0.25});
  EXPECT_TRUE(bitwise_equal(count_sketch(v, id, SketchSide::y), v));

  Rng rng(3);
  auto s = SketchParams::random(10, 10, 8, 42);
  auto x = random_vector(10, rng), y = random_vector(10, rng);
  const double a = 2.0, b = -0.5;
  auto lhs = count_sketch(add(scale(x, a), scale(y, b)), s, SketchSide::x);
  auto rhs = add(scale(count_sketch(x, s, SketchSide::x), a), scale(count_sketch(y, s, SketchSide::x), b));
  for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(lhs.at(j), rhs.at(j), 1e-14);
  EXPECT_THROW(count_sketch(Tensor::vector({1, 2}), s, SketchSide::x), DimensionError);
}

TEST(SketchParams, RandomIsDeterministicAndRoundsUp) {
  auto a = SketchParams::random(5, 7, 12, 9);
  auto b = SketchParams::random(5, 7, 12, 9);
  EXPECT_EQ(a.dim, 16u);
  EXPECT_EQ(a.hash_x, b.hash_x);
  EXPECT_EQ(a.sign_y, b.sign_y);
  for (auto h : a.hash_x) EXPECT_LT(h, 16u);
  EXPECT_THROW(SketchParams::from_tables(4, {4}, {1}, {0}, {1}), ConfigError);
  EXPECT_THROW(SketchParams::from_tables(4, {0}, {2}, {0}, {1}), ConfigError);
}

TEST(MCB, EqualsOuterProductSketch) {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto s = SketchParams::random(8, 8, 16, seed);
    auto x = random_vector(8, rng), y = random_vector(8, rng);
    const auto got = mcb_fuse(x, y, raw_mcb(s)).to_vector();
    const auto want = outer_product_sketch(x, y, s);
    for (std::size_t k = 0; k < 16; ++k) ASSERT_NEAR(got[k], want[k], 1e-9) << seed;
  }
}

TEST(MCB, ImpulseSketchReturnsOtherSketch) {
  // x = e_0 with h_x(0) = 0, s_x(0) = +1 sketches to the impulse.
  auto s = SketchParams::from_tables(8, {0, 3}, {1, -1}, {5, 2, 7}, {1, -1, 1});
  auto y = Tensor::vector({0.5, 2.0, -1.0});
  const auto z = mcb_fuse(Tensor::vector({1, 0}), y, raw_mcb(s));
  const auto sy = count_sketch(y, s, SketchSide::y);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(z.at(k), sy.at(k), 1e-12);
}

TEST(MCB, BilinearWithoutPostProcessing) {
  Rng rng(5);
  auto s = SketchParams::random(6, 6, 16, 3);
  auto x = random_vector(6, rng), y = random_vector(6, rng);
  auto a = mcb_fuse(scale(x, 3.0), y, raw_mcb(s));
  auto b = scale(mcb_fuse(x, y, raw_mcb(s)), 3.0);
  for (std::size_t k = 0; k < 16; ++k) EXPECT_NEAR(a.at(k), b.at(k), 1e-12);
}

TEST(MCB, GradientWithPostProcessing) {
  Rng rng(6);
  auto s = SketchParams::random(8, 8, 16, 11);
  FusionConfig cfg;
  cfg.sketch = s;
  auto x = random_vector(8, rng, true, 0.5, 1.5);
  auto y = random_vector(8, rng, true, 0.5, 1.5);
  Tensor leaves[] = {x, y};
  Rng wr(7);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> w(16);
  for (auto& v : w) v = u(wr);
  const auto r = grad_check_params([&] { return sum(mul_constant(mcb_fuse(x, y, cfg), w)); }, leaves);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(MCB, PostProcessingYieldsUnitNorm) {
  Rng rng(8);
  FusionConfig cfg;
  cfg.sketch = SketchParams::random(8, 8, 16, 1);
  const auto z = mcb_fuse(random_vector(8, rng), random_vector(8, rng), cfg);
  double n = 0;
  for (double v : z.data()) n += v * v;
  EXPECT_NEAR(n, 1.0, 1e-10);
}

TEST(MCB, InnerProductUnbiasedOverSeeds) {
  Rng rng(9);
  auto x = random_vector(16, rng), y = random_vector(16, rng);
  double truth = 0;
  for (std::size_t i = 0; i < 16; ++i) truth += x.at(i) * y.at(i);
  std::vector<double> est;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    auto s = SketchParams::random(16, 16, 64, seed);
    auto sx = count_sketch(x, s, SketchSide::x), sy = count_sketch(y, s, SketchSide::x);
    double dot = 0;
    for (std::size_t j = 0; j < 64; ++j) dot += sx.at(j) * sy.at(j);
    est.push_back(dot);
  }
  double m = 0, v = 0;
  for (double e : est) m += e;
  m /= est.size();
  for (double e : est) v += (e - m) * (e - m);
  const double se = std::sqrt(v / (est.size() - 1) / est.size());
  EXPECT_LT(std::abs(m - truth), 3 * se);
}

TEST(Fuse, DispatchAndBaselines) {
  Rng rng(10);
  auto x = random_vector(4, rng), ones = Tensor::vector({1, 1, 1, 1});
  FusionConfig h;
  h.kind = FusionKind::hadamard;
  h.signed_sqrt = h.l2_normalize = false;
  EXPECT_TRUE(bitwise_equal(fuse(x, ones, h), x));
  EXPECT_THROW(fuse(x, Tensor::vector({1, 2}), h), DimensionError);

  FusionConfig c;
  c.kind = FusionKind::concat;
  c.signed_sqrt = c.l2_normalize = false;
  EXPECT_EQ(fuse(x, Tensor::vector({1, 2}), c).numel(), 6u);
  EXPECT_EQ(fused_width(c, 4, 2), 6u);

  FusionConfig m;
  m.sketch = SketchParams::random(4, 4, 16, 2);
  auto y = random_vector(4, rng);
  EXPECT_TRUE(bitwise_equal(fuse(x, y, m), mcb_fuse(x, y, m)));
  EXPECT_THROW(mcb_fuse(x, y, h), ConfigError);
}
