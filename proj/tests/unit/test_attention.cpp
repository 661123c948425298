#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "drau/attention.hpp"
#include "drau/autograd.hpp"
#include "drau/errors.hpp"
#include "drau/ops.hpp"
#include "drau/parameters.hpp"

using namespace drau;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

RAUConfig small_config(std::size_t k = 5) {
  RAUConfig c;
  c.positions = k;
  c.channels = 4;
  c.scaled = 3;
  c.lstm_hidden = 4;
  c.glimpses = 2;
  c.feature_width = 4;
  c.output = 3;
  return c;
}

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  std::vector<double> out;
  for (auto r : perm) {
    auto row = slice(x, 0, r, r + 1).to_vector();
    out.insert(out.end(), row.begin(), row.end());
  }
  return Tensor::from(x.shape(), out);
}

// Whether attention columns permute along with the inputs.
bool commutes(const AttentionMap& a, const AttentionMap& b, const std::vector<std::size_t>& perm) {
  for (std::size_t g = 0; g < a.glimpses(); ++g) {
    const auto ra = a.row(g), rb = b.row(g);
    for (std::size_t n = 0; n < perm.size(); ++n)
      if (std::abs(rb[n] - ra[perm[n]]) > 1e-12) return false;
  }
  return true;
}

std::vector<Tensor> leaves_of(const ParameterSet& set) {
  std::vector<Tensor> out;
  for (const auto& p : set.entries())
    if (p.trainable) out.push_back(p.value);
  return out;
}

}  // namespace

TEST(RAU, ShapeContract) {
  RAUConfig c;
  c.positions = 16;
  c.channels = 32;
  c.scaled = 32;
  c.lstm_hidden = 16;
  c.glimpses = 2;
  c.feature_width = 32;
  c.output = 64;
  Rng rng(1);
  auto p = RAUParams::create(c, rng);
  auto x = random_tensor({16, 32}, rng);
  const auto out = rau_forward(x, x, p);
  EXPECT_EQ(out.y.numel(), 128u);
  EXPECT_EQ(out.attention.weights.shape(), (Shape{2, 16}));
  EXPECT_EQ(p.parameter_count(), rau_parameter_count(c));
}

TEST(RAU, SinglePositionGetsAllWeight) {
  Rng rng(2);
  auto p = RAUParams::create(small_config(1), rng);
  auto x = random_tensor({1, 4}, rng);
  auto f = random_tensor({1, 4}, rng);
  const auto out = rau_forward(x, f, p);
  for (double w : out.attention.weights.data()) EXPECT_EQ(w, 1.0);
  const auto att = apply_attention(out.attention, f);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(att.at(1, j), f.at(0, j));
}

TEST(RAU, EqualsStageComposition) {
  Rng rng(3);
  auto p = RAUParams::create(small_config(), rng);
  auto x = random_tensor({5, 4}, rng);
  auto f = random_tensor({5, 4}, rng);
  const auto out = rau_forward(x, f, p);
  const auto weights = attention_weights(rau_scan(rau_scale(x, p), p), p.glimpse, p.glimpse_slope, {});
  const auto y = attention_output(apply_attention(weights, f), p.out, p.out_slope, GlimpseMerge::concat);
  EXPECT_TRUE(bitwise_equal(out.attention.weights, weights));
  EXPECT_TRUE(bitwise_equal(out.y, y));
}

TEST(RAU, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto p = RAUParams::create(small_config(), rng);
  auto x = random_tensor({5, 4}, rng, true);
  auto f = random_tensor({5, 4}, rng, true);
  ParameterSet set;
  p.register_with(set, "rau");
  auto leaves = leaves_of(set);
  leaves.push_back(x);
  leaves.push_back(f);
  const auto r = grad_check_params([&] { return sum(rau_forward(x, f, p).y); }, leaves, 1e-3,
                                   Stencil::central_five_point);
  EXPECT_LT(r.max_rel_error, 1e-4);
  EXPECT_GT(r.checked, 0u);
}

TEST(RAU, ErrorsOnMismatchAndFullMask) {
  Rng rng(5);
  auto p = RAUParams::create(small_config(), rng);
  EXPECT_THROW(rau_forward(random_tensor({4, 4}, rng), random_tensor({4, 4}, rng), p), DimensionError);
  auto x = random_tensor({5, 4}, rng);
  const std::uint8_t none[] = {0, 0, 0, 0, 0};
  EXPECT_THROW(rau_forward(x, x, p, none), DegenerateInputError);
}

TEST(RAU, MaskedPositionsAreExactlyZero) {
  Rng rng(6);
  auto p = RAUParams::create(small_config(), rng);
  auto x = random_tensor({5, 4}, rng);
  const std::uint8_t mask[] = {1, 1, 0, 1, 0};
  const auto out = rau_forward(x, x, p, mask);
  for (std::size_t g = 0; g < 2; ++g) {
    const auto row = out.attention.row(g);
    EXPECT_EQ(row[2], 0.0);
    EXPECT_EQ(row[4], 0.0);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(ConvAttention, PermutationEquivariant) {
  Rng rng(7);
  auto p = ConvAttnParams::create(small_config(), 6, rng);
  std::vector<std::size_t> perm{0, 1, 2, 3, 4};
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({5, 4}, rng);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto a = conv_attention_forward(x, x, p);
    const auto b = conv_attention_forward(permute_rows(x, perm), permute_rows(x, perm), p);
    ASSERT_TRUE(commutes(a.attention, b.attention, perm)) << trial;
  }
}

TEST(RAU, OrderSensitive) {
  Rng rng(8);
  auto p = RAUParams::create(small_config(), rng);
  std::vector<std::size_t> perm{0, 1, 2, 3, 4};
  std::size_t violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto x = random_tensor({5, 4}, rng);
    std::shuffle(perm.begin(), perm.end(), rng);
    if (std::is_sorted(perm.begin(), perm.end())) continue;
    const auto a = rau_forward(x, x, p);
    const auto b = rau_forward(permute_rows(x, perm), permute_rows(x, perm), p);
    violations += commutes(a.attention, b.attention, perm) ? 0 : 1;
  }
  EXPECT_GT(violations, 0u);
}

TEST(ConvAttention, GradientMatchesFiniteDifferences) {
  Rng rng(9);
  auto p = ConvAttnParams::create(small_config(), 6, rng);
  auto x = random_tensor({5, 4}, rng, true);
  ParameterSet set;
  p.register_with(set, "conv");
  auto leaves = leaves_of(set);
  leaves.push_back(x);
  const auto r = grad_check_params([&] { return sum(conv_attention_forward(x, x, p).y); }, leaves, 1e-3,
                                   Stencil::central_five_point);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(ApplyAttention, OneHotUniformAndLoop) {
  Rng rng(10);
  auto f = random_tensor({4, 3}, rng);
  auto onehot = Tensor::matrix(1, 4, {0, 0, 1, 0});
  const auto sel = apply_attention(onehot, f);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(sel.at(0, j), f.at(2, j));

  auto uniform = Tensor::matrix(1, 4, {0.25, 0.25, 0.25, 0.25});
  const auto avg = apply_attention(uniform, f);
  for (std::size_t j = 0; j < 3; ++j) {
    const double m = (f.at(0, j) + f.at(1, j) + f.at(2, j) + f.at(3, j)) / 4;
    EXPECT_NEAR(avg.at(0, j), m, 1e-15);
  }

  auto w = softmax(random_tensor({2, 4}, rng), 1);
  const auto out = apply_attention(w, f);
  for (std::size_t g = 0; g < 2; ++g)
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0, lo = INFINITY, hi = -INFINITY;
      for (std::size_t n = 0; n < 4; ++n) {
        acc += w.at(g, n) * f.at(n, j);
        lo = std::min(lo, f.at(n, j));
        hi = std::max(hi, f.at(n, j));
      }
      EXPECT_NEAR(out.at(g, j), acc, 1e-15);
      EXPECT_GE(out.at(g, j), lo - 1e-15);
      EXPECT_LE(out.at(g, j), hi + 1e-15);
    }
  EXPECT_THROW(apply_attention(w, random_tensor({5, 3}, rng)), DimensionError);
}

TEST(Matcher, DefaultDeskConfigWithinTolerance) {
  RAUConfig c;
  c.positions = 16;
  c.channels = 64;
  c.scaled = 64;
  c.lstm_hidden = 64;
  c.glimpses = 2;
  const auto s = match_parameter_counts(c);
  EXPECT_TRUE(s.within_tolerance);
  EXPECT_LT(s.relative_gap, 0.02);
  EXPECT_EQ(s.conv_count, conv_attention_parameter_count(c, s.conv_hidden));
  Rng rng(11);
  EXPECT_EQ(ConvAttnParams::create(c, s.conv_hidden, rng).parameter_count(), s.conv_count);
  EXPECT_EQ(RAUParams::create(c, rng).parameter_count(), s.rau_count);
}

TEST(Matcher, ZeroLSTMMatchesScaledWidth) {
  RAUConfig c;
  c.lstm_hidden = 0;
  const auto s = match_parameter_counts(c);
  EXPECT_EQ(s.conv_hidden, c.scaled);
  EXPECT_EQ(s.relative_gap, 0.0);
}

TEST(Matcher, DoublingHiddenQuadruplesLSTMShare) {
  RAUConfig a;
  a.lstm_hidden = 64;
  RAUConfig b = a;
  b.lstm_hidden = 128;
  const double la = static_cast<double>(lstm_parameter_count(a.scaled, 64, 1));
  const double lb = static_cast<double>(lstm_parameter_count(b.scaled, 128, 1));
  // 4H(in + H) + 4H grows between 2x and 4x, approaching 4x as H dominates.
  EXPECT_GT(lb / la, 2.5);
  EXPECT_LT(lb / la, 4.0);
  const auto sa = match_parameter_counts(a);
  const auto sb = match_parameter_counts(b);
  EXPECT_GT(sb.conv_hidden, sa.conv_hidden);
  EXPECT_TRUE(sb.within_tolerance);
}
