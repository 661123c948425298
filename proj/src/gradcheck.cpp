#include "drau/gradcheck.hpp"

#include <functional>
#include <utility>

#include "drau/attention.hpp"
#include "drau/autograd.hpp"
#include "drau/fusion.hpp"
#include "drau/init.hpp"
#include "drau/layers.hpp"
#include "drau/model.hpp"
#include "drau/ops.hpp"
#include "drau/random.hpp"

namespace drau {

namespace {

struct Problem {
  std::vector<Tensor> leaves;
  std::function<Tensor()> loss;
  bool composite = false;
};

using Builder = std::function<Problem(Rng&)>;

Tensor random_leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> values(shape_numel(shape));
  for (auto& v : values) v = u(rng);
  return Tensor::from(shape, std::move(values), true);
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> w(n);
  for (auto& v : w) v = u(rng);
  return w;
}

// Random linear read-out so every output coordinate carries a distinct weight.
Tensor readout(const Tensor& y, const std::vector<double>& w) { return sum(mul_constant(y, w)); }

Problem unary(Rng& rng, const Shape& shape, std::function<Tensor(const Tensor&)> op, double lo = -1.0,
              double hi = 1.0) {
  auto x = random_leaf(shape, rng, lo, hi);
  const auto probe = op(x);
  auto w = random_weights(probe.numel(), rng);
  return {{x}, [x, w, op] { return readout(op(x), w); }};
}

Problem binary(Rng& rng, const Shape& sa, const Shape& sb, std::function<Tensor(const Tensor&, const Tensor&)> op) {
  auto a = random_leaf(sa, rng);
  auto b = random_leaf(sb, rng);
  auto w = random_weights(op(a, b).numel(), rng);
  return {{a, b}, [a, b, w, op] { return readout(op(a, b), w); }};
}

void append_parameters(std::vector<Tensor>& leaves, const ParameterSet& set) {
  for (const auto& p : set.entries())
    if (p.trainable) leaves.push_back(p.value);
}

ModelConfig toy_model(Variant v, std::uint64_t seed) {
  ModelConfig c;
  c.variant = v;
  c.regions = 4;
  c.region_features = 6;
  c.joint_width = 8;
  c.vocab_size = 7;
  c.answers = 5;
  c.word_embed = 4;
  c.pretrained_embed = 3;
  c.question_hidden = 8;
  c.question_layers = 2;
  c.summary_width = 8;
  c.attn_scaled = 8;
  c.attn_hidden = 8;
  c.glimpses = 2;
  c.attn_output = 8;
  c.sketch_dim = 16;
  c.dropout = 0.3;
  c.seed = seed;
  c.embedding_seed = seed + 17;
  return c;
}

Problem model_problem(Variant v, Rng& rng) {
  auto params = std::make_shared<ModelParams>(ModelParams::create(toy_model(v, rng())));
  auto regions = random_leaf({4, 6}, rng, -1.0, 1.0).detach();
  std::vector<std::size_t> tokens{2, 5, 3};
  const auto target = std::uniform_int_distribution<std::size_t>(0, 4)(rng);
  const auto dropout_seed = rng();
  Problem p;
  append_parameters(p.leaves, params->parameters());
  p.composite = true;
  p.loss = [params, regions, tokens, target, dropout_seed] {
    Rng drop(dropout_seed);
    const auto out = model_forward({regions, tokens}, *params, Mode::train, drop);
    return cross_entropy_loss(out.logits, target);
  };
  return p;
}

RAUConfig toy_attention(AttentionTarget target) {
  RAUConfig c;
  c.positions = target == AttentionTarget::visual ? 4 : 0;
  c.channels = 6;
  c.scaled = 8;
  c.lstm_hidden = 8;
  c.glimpses = 2;
  c.feature_width = 5;
  c.output = 4;
  c.target = target;
  return c;
}

std::vector<std::pair<std::string, Builder>> op_builders() {
  std::vector<std::pair<std::string, Builder>> b;
  b.emplace_back("matmul", [](Rng& r) { return binary(r, {3, 4}, {4, 2}, [](auto& a, auto& x) { return matmul(a, x); }); });
  b.emplace_back("transpose", [](Rng& r) { return unary(r, {3, 4}, [](auto& x) { return transpose(x); }); });
  b.emplace_back("add", [](Rng& r) { return binary(r, {3, 4}, {3, 4}, [](auto& a, auto& x) { return add(a, x); }); });
  b.emplace_back("add_broadcast", [](Rng& r) { return binary(r, {3, 4}, {4}, [](auto& a, auto& x) { return add(a, x); }); });
  b.emplace_back("sub", [](Rng& r) { return binary(r, {3, 4}, {4}, [](auto& a, auto& x) { return sub(a, x); }); });
  b.emplace_back("mul", [](Rng& r) { return binary(r, {3, 4}, {3, 4}, [](auto& a, auto& x) { return mul(a, x); }); });
  b.emplace_back("mul_broadcast", [](Rng& r) { return binary(r, {3, 4}, {4}, [](auto& a, auto& x) { return mul(a, x); }); });
  b.emplace_back("scale", [](Rng& r) { return unary(r, {5}, [](auto& x) { return scale(x, -2.5); }); });
  b.emplace_back("tanh", [](Rng& r) { return unary(r, {3, 3}, [](auto& x) { return tanh(x); }, -2.0, 2.0); });
  b.emplace_back("sigmoid", [](Rng& r) { return unary(r, {3, 3}, [](auto& x) { return sigmoid(x); }, -3.0, 3.0); });
  b.emplace_back("prelu", [](Rng& r) {
    return binary(r, {4, 3}, {3}, [](auto& x, auto& s) { return prelu(x, s); });
  });
  b.emplace_back("signed_sqrt", [](Rng& r) { return unary(r, {8}, [](auto& x) { return signed_sqrt(x); }); });
  b.emplace_back("softmax_rows", [](Rng& r) { return unary(r, {3, 5}, [](auto& x) { return softmax(x, 1); }, -2.0, 2.0); });
  b.emplace_back("softmax_masked", [](Rng& r) {
    static const std::vector<std::uint8_t> mask{1, 0, 1, 1};
    return unary(r, {4, 2}, [](auto& x) { return softmax(x, 0, mask); }, -2.0, 2.0);
  });
  b.emplace_back("l2_normalize", [](Rng& r) { return unary(r, {6}, [](auto& x) { return l2_normalize(x); }); });
  b.emplace_back("l2_normalize_rows", [](Rng& r) { return unary(r, {3, 4}, [](auto& x) { return l2_normalize(x, 1); }); });
  b.emplace_back("concat", [](Rng& r) {
    return binary(r, {2, 3}, {2, 2}, [](auto& a, auto& x) { return concat({a, x}, 1); });
  });
  b.emplace_back("slice", [](Rng& r) { return unary(r, {4, 3}, [](auto& x) { return slice(x, 0, 1, 3); }); });
  b.emplace_back("reshape", [](Rng& r) { return unary(r, {2, 6}, [](auto& x) { return reshape(x, {3, 4}); }); });
  b.emplace_back("broadcast_to", [](Rng& r) { return unary(r, {1, 4}, [](auto& x) { return broadcast_to(x, {3, 4}); }); });
  b.emplace_back("sum_axis", [](Rng& r) { return unary(r, {3, 4}, [](auto& x) { return sum(x, 0); }); });
  b.emplace_back("mean_axis", [](Rng& r) { return unary(r, {3, 4}, [](auto& x) { return mean(x, 1); }); });
  b.emplace_back("mean", [](Rng& r) { return unary(r, {3, 4}, [](auto& x) { return mean(x); }); });
  b.emplace_back("gather_rows", [](Rng& r) {
    static const std::vector<std::size_t> ids{2, 0, 2};
    return unary(r, {4, 3}, [](auto& x) { return gather_rows(x, ids); });
  });
  b.emplace_back("softmax_cross_entropy", [](Rng& r) {
    auto x = random_leaf({1, 6}, r, -2.0, 2.0);
    const auto target = std::uniform_int_distribution<std::size_t>(0, 5)(r);
    return Problem{{x}, [x, target] { return softmax_cross_entropy(x, target); }};
  });
  b.emplace_back("count_sketch", [](Rng& r) {
    const auto sp = SketchParams::random(8, 8, 16, r());
    return unary(r, {1, 8}, [sp](auto& x) { return count_sketch(x, sp, SketchSide::y); });
  });
  b.emplace_back("circular_convolution", [](Rng& r) {
    return binary(r, {1, 16}, {1, 16}, [](auto& a, auto& x) { return circular_convolution(a, x); });
  });
  b.emplace_back("mcb_fuse", [](Rng& r) {
    FusionConfig fc;
    fc.sketch = SketchParams::random(8, 8, 16, r());
    return binary(r, {1, 8}, {1, 8}, [fc](auto& a, auto& x) { return mcb_fuse(a, x, fc); });
  });
  b.emplace_back("conv1x1", [](Rng& r) {
    auto p = Conv1x1Params::glorot(5, 3, r);
    auto x = random_leaf({4, 5}, r);
    auto w = random_weights(12, r);
    return Problem{{x, p.weight, p.bias}, [x, p, w] { return readout(conv1x1(x, p), w); }};
  });
  b.emplace_back("lstm_sequence", [](Rng& r) {
    auto p = LSTMParams::uniform(3, 8, 2, r, 0.5);
    auto x = random_leaf({3, 3}, r);
    auto w = random_weights(3 * 16, r);
    Problem out{{x}, [x, p, w] { return readout(lstm_sequence(x, p), w); }};
    for (const auto& l : p.layers) out.leaves.insert(out.leaves.end(), {l.w_input, l.w_hidden, l.bias});
    out.composite = true;
    return out;
  });
  b.emplace_back("rau", [](Rng& r) {
    const auto cfg = toy_attention(AttentionTarget::visual);
    auto p = RAUParams::create(cfg, r);
    auto x = random_leaf({4, 6}, r);
    auto f = random_leaf({4, 5}, r);
    auto w = random_weights(cfg.output_width(), r);
    Problem out{{x, f}, [x, f, p, w] { return readout(rau_forward(x, f, p).y, w); }};
    ParameterSet set;
    p.register_with(set, "rau");
    append_parameters(out.leaves, set);
    out.composite = true;
    return out;
  });
  b.emplace_back("rau_masked", [](Rng& r) {
    const auto cfg = toy_attention(AttentionTarget::textual);
    auto p = RAUParams::create(cfg, r);
    auto x = random_leaf({3, 6}, r);
    auto f = random_leaf({3, 5}, r);
    auto w = random_weights(cfg.output_width(), r);
    static const std::vector<std::uint8_t> mask{1, 1, 0};
    Problem out{{x, f}, [x, f, p, w] { return readout(rau_forward(x, f, p, mask).y, w); }};
    ParameterSet set;
    p.register_with(set, "rau");
    append_parameters(out.leaves, set);
    out.composite = true;
    return out;
  });
  b.emplace_back("conv_attention", [](Rng& r) {
    const auto cfg = toy_attention(AttentionTarget::visual);
    auto p = ConvAttnParams::create(cfg, 7, r);
    auto x = random_leaf({4, 6}, r);
    auto f = random_leaf({4, 5}, r);
    auto w = random_weights(cfg.output_width(), r);
    Problem out{{x, f}, [x, f, p, w] { return readout(conv_attention_forward(x, f, p).y, w); }};
    ParameterSet set;
    p.register_with(set, "conv");
    append_parameters(out.leaves, set);
    out.composite = true;
    return out;
  });
  return b;
}

std::vector<std::pair<std::string, Builder>> model_builders() {
  std::vector<std::pair<std::string, Builder>> b;
  for (auto v : all_variants()) {
    b.emplace_back("model:" + variant_name(v), [v](Rng& r) { return model_problem(v, r); });
  }
  return b;
}

std::vector<std::pair<std::string, Builder>> builders(const GradCheckSuiteConfig& cfg) {
  std::vector<std::pair<std::string, Builder>> all;
  if (cfg.include_ops) all = op_builders();
  if (cfg.include_models) {
    for (auto& m : model_builders()) all.push_back(std::move(m));
  }
  return all;
}

}  // namespace

std::vector<std::string> gradcheck_case_names(const GradCheckSuiteConfig& cfg) {
  std::vector<std::string> names;
  for (const auto& [name, _] : builders(cfg)) names.push_back(name);
  return names;
}

constexpr std::uint64_t kMaxDraws = 4;

std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteConfig& cfg) {
  std::vector<GradCheckCase> cases;
  const auto all = builders(cfg);
  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const std::uint64_t seed = cfg.base_seed + s;
    for (std::size_t i = 0; i < all.size(); ++i) {
      // A draw whose every probe lands next to a kink is redrawn.
      GradCheckResult r;
      for (std::uint64_t attempt = 0; attempt < kMaxDraws && r.checked == 0; ++attempt) {
        auto rng = make_rng(derive_seed(seed, i), attempt);
        auto problem = all[i].second(rng);
        r = problem.composite
                ? grad_check_params(problem.loss, problem.leaves, cfg.composite_step, Stencil::central_five_point)
                : grad_check_params(problem.loss, problem.leaves);
      }
      GradCheckCase c;
      c.name = all[i].first;
      c.seed = seed;
      c.max_rel_error = r.max_rel_error;
      c.checked = r.checked;
      c.skipped_kinks = r.skipped_kinks;
      c.passed = r.checked > 0 && r.max_rel_error < cfg.tolerance;
      cases.push_back(std::move(c));
    }
  }
  return cases;
}

}  // namespace drau
