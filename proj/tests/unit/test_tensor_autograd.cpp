#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "drau/autograd.hpp"
#include "drau/errors.hpp"
#include "drau/ops.hpp"
#include "drau/random.hpp"

using namespace drau;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad = true, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Random linear readout so every output coordinate contributes to the loss.
Tensor readout(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = u(rng);
  return sum(mul_constant(y, w));
}

}  // namespace

TEST(Tensor, ShapeHelpers) {
  EXPECT_EQ(shape_numel({}), 1u);
  EXPECT_EQ(shape_numel({3, 4}), 12u);
  EXPECT_EQ(shape_string({3, 4}), "[3x4]");
  auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, LeafHasNoHistoryAndDetachCopies) {
  auto a = Tensor::vector({1, 2}, true);
  EXPECT_TRUE(a.is_leaf());
  auto b = scale(a, 2.0);
  EXPECT_FALSE(b.is_leaf());
  auto c = b.detach();
  EXPECT_TRUE(c.is_leaf());
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(bitwise_equal(b, c));
}

TEST(Ops, MatmulValuesAndShapeErrors) {
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  EXPECT_EQ(matmul(a, b).to_vector(), (std::vector<double>{19, 22, 43, 50}));
  EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
}

TEST(Ops, MatmulGradientMatchesFiniteDifferences) {
  Rng rng(11);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({4, 2}, rng);
  Tensor leaves[] = {a, b};
  const auto r = grad_check_params([&] { return readout(matmul(a, b), 1); }, leaves);
  EXPECT_LT(r.max_rel_error, 1e-6);
  EXPECT_EQ(r.checked, 20u);
}

TEST(Ops, PReLUValuesAndSlopeGradient) {
  auto slope = Tensor::vector({0.25}, true);
  EXPECT_DOUBLE_EQ(prelu(Tensor::vector({3.0}), slope).item(), 3.0);
  EXPECT_DOUBLE_EQ(prelu(Tensor::vector({-2.0}), slope).item(), -0.5);

  auto y = prelu(Tensor::vector({-2.0}), slope);
  const auto g = backward(sum(y));
  EXPECT_DOUBLE_EQ(g.of(slope)[0], -2.0);
  const double fd = grad_check([](const Tensor& a) { return sum(prelu(Tensor::vector({-2.0}), a)); },
                               Tensor::vector({0.25}, true));
  EXPECT_LT(fd, 1e-8);

  EXPECT_THROW(prelu(Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
}

TEST(Ops, PReLUKinkUsesPositiveBranch) {
  auto x = Tensor::vector({0.0}, true);
  auto slope = Tensor::vector({0.25}, true);
  const auto g = backward(sum(prelu(x, slope)));
  EXPECT_DOUBLE_EQ(g.of(x)[0], 1.0);
  EXPECT_DOUBLE_EQ(g.of(slope)[0], 0.0);
}

TEST(Ops, SoftmaxValues) {
  auto s = softmax(Tensor::vector({0.0, 0.0}), 0);
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  auto t = softmax(Tensor::vector({0.0, std::log(3.0)}), 0);
  EXPECT_NEAR(t.at(0), 0.25, 1e-15);
  EXPECT_NEAR(t.at(1), 0.75, 1e-15);
  // Max subtraction keeps large logits finite.
  auto big = softmax(Tensor::vector({1000.0, 1000.0}), 0);
  EXPECT_DOUBLE_EQ(big.at(0), 0.5);
  EXPECT_THROW(softmax(Tensor::zeros({2, 0}), 1), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneAndMaskIsExact) {
  Rng rng(3);
  auto x = random_tensor({4, 6}, rng, false, -20, 20);
  auto s = softmax(x, 1);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 6; ++c) total += s.at(r, c);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  const std::uint8_t mask[] = {1, 0, 1, 1, 0, 1};
  auto m = softmax(x, 1, mask);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(m.at(r, 1), 0.0);
    EXPECT_EQ(m.at(r, 4), 0.0);
  }
  const std::uint8_t none[] = {0, 0, 0, 0, 0, 0};
  EXPECT_THROW(softmax(x, 1, none), DegenerateInputError);
}

TEST(Ops, SoftmaxJacobianMatchesFiniteDifferences) {
  Rng rng(5);
  auto x = random_tensor({5}, rng);
  EXPECT_LT(grad_check([](const Tensor& v) { return readout(softmax(v, 0), 9); }, x), 1e-6);
}

TEST(Ops, ElementwiseAndReductionGradients) {
  Rng rng(8);
  auto a = random_tensor({3, 4}, rng);
  auto b = random_tensor({3, 4}, rng);
  auto bias = random_tensor({4}, rng);
  Tensor leaves[] = {a, b, bias};
  auto f = [&] {
    auto y = add(mul(tanh(a), sigmoid(b)), bias);
    y = sub(y, scale(l2_normalize(a, 1), 0.5));
    return add(readout(y, 2), mean(sum(b, 0)));
  };
  EXPECT_LT(grad_check_params(f, leaves).max_rel_error, 1e-5);
}

TEST(Ops, SliceConcatGradientRecoversUpstreamPattern) {
  auto x = Tensor::from({2, 5}, std::vector<double>(10, 1.0), true);
  // Upstream one-hot at column 3 of the slice [1, 4): grad lands on column 4.
  auto s = slice(x, 1, 1, 4);
  const auto g = backward(sum(mul_constant(s, {0, 0, 1, 0, 0, 0})));
  const auto gx = g.of(x);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(gx[i], i == 3 ? 1.0 : 0.0) << i;

  auto c = concat({x, x}, 0);
  EXPECT_EQ(c.shape(), (Shape{4, 5}));
  const auto gc = backward(sum(c));
  for (double v : gc.of(x)) EXPECT_EQ(v, 2.0);
}

TEST(Ops, GatherRowsRejectsOutOfRange) {
  auto table = Tensor::zeros({3, 2});
  const std::size_t bad[] = {3};
  EXPECT_THROW(gather_rows(table, bad), LookupError);
}

TEST(Ops, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Rng rng(13);
  auto logits = random_tensor({6}, rng, true, -3, 3);
  const auto g = backward(softmax_cross_entropy(logits, 2));
  const auto p = softmax(logits.detach(), 0);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(g.of(logits)[i], p.at(i) - (i == 2 ? 1.0 : 0.0), 1e-15);
  EXPECT_LT(grad_check([](const Tensor& v) { return softmax_cross_entropy(v, 2); }, logits), 1e-6);
  EXPECT_THROW(softmax_cross_entropy(logits, 6), ContractError);
}

TEST(Autograd, BackwardRequiresScalar) {
  EXPECT_THROW(backward(Tensor::vector({1, 2}, true)), ContractError);
}

TEST(Autograd, FanOutAccumulates) {
  auto x = Tensor::scalar(3.0, true);
  auto y = add(mul(x, x), x);  // x^2 + x
  EXPECT_DOUBLE_EQ(backward(y).of(x)[0], 7.0);
}

TEST(Autograd, BackwardOrderIsReverseTopological) {
  auto a = Tensor::vector({1, 2}, true);
  auto b = tanh(a);
  auto c = mul(b, a);
  auto d = sum(add(c, b));
  const auto records = graph_records(d);
  const auto order = backward_order(d);
  ASSERT_FALSE(order.empty());
  EXPECT_EQ(order.front(), d.id());
  // Every node appears after all nodes that consume it.
  std::map<std::uint64_t, std::size_t> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
  for (const auto& r : records)
    for (auto in : r.inputs) EXPECT_LT(pos.at(r.output), pos.at(in));
  EXPECT_TRUE(std::is_sorted(order.rbegin(), order.rend()));
}

TEST(Autograd, NoGradientForConstants) {
  auto w = Tensor::vector({1, 2}, true);
  auto k = Tensor::vector({3, 4});
  const auto g = backward(sum(mul(w, k)));
  EXPECT_TRUE(g.contains(w));
  EXPECT_FALSE(g.contains(k));
  EXPECT_THROW(g.of(k), LookupError);
}

TEST(GradCheck, SelfTestOnSmoothFunctionIsTight) {
  // prelu-sum away from zero crossings is piecewise linear, so differences are exact.
  auto x = Tensor::vector({0.7, -1.3, 2.1, -0.4}, true);
  auto slope = Tensor::vector({0.25});
  EXPECT_LT(grad_check([&](const Tensor& v) { return sum(prelu(v, slope)); }, x), 1e-6);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A deliberately wrong backward rule must be flagged.
  auto x = Tensor::vector({0.3, -0.2}, true);
  auto wrong = [](const Tensor& v) {
    return Tensor::make_op("bad_square", {}, {v.at(0) * v.at(0) + v.at(1) * v.at(1)}, {v},
                           [](std::span<const double> go, std::span<std::vector<double>*> gi) {
                             (*gi[0])[0] += go[0];
                             (*gi[0])[1] += go[0];
                           });
  };
  EXPECT_GT(grad_check(wrong, x), 0.1);
}

TEST(GradCheck, SkipsProbesThatCrossAKink) {
  auto x = Tensor::vector({1e-7, 0.5}, true);
  auto slope = Tensor::vector({0.25});
  Tensor leaves[] = {x};
  const auto r = grad_check_params([&] { return sum(prelu(x, slope)); }, leaves);
  EXPECT_EQ(r.skipped_kinks, 1u);
  EXPECT_EQ(r.checked, 1u);
  EXPECT_LT(r.max_rel_error, 1e-9);
}

TEST(GradCheck, RestoresLeafValues) {
  auto x = Tensor::vector({0.1, 0.2, 0.3}, true);
  const auto before = x.to_vector();
  grad_check([](const Tensor& v) { return sum(tanh(v)); }, x);
  EXPECT_EQ(x.to_vector(), before);
}

TEST(GradCheck, FivePointStencilIsMoreAccurate) {
  auto x = Tensor::vector({0.4, -0.9}, true);
  Tensor leaves[] = {x};
  auto f = [&] { return sum(tanh(scale(x, 3.0))); };
  const auto two = grad_check_params(f, leaves, 1e-2, Stencil::central);
  const auto five = grad_check_params(f, leaves, 1e-2, Stencil::central_five_point);
  EXPECT_LT(five.max_rel_error, two.max_rel_error / 100);
}

TEST(SignedSqrt, ValuesAndZeroGradient) {
  auto x = Tensor::vector({4.0, -9.0, 0.0}, true);
  auto y = signed_sqrt(x);
  EXPECT_EQ(y.to_vector(), (std::vector<double>{2.0, -3.0, 0.0}));
  const auto g = backward(sum(y));
  EXPECT_DOUBLE_EQ(g.of(x)[0], 0.25);
  EXPECT_DOUBLE_EQ(g.of(x)[1], 1.0 / 6.0);
  EXPECT_EQ(g.of(x)[2], 0.0);
}
