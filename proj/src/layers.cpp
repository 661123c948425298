#include "drau/layers.hpp"

#include <cmath>

#include "drau/errors.hpp"
#include "drau/init.hpp"
#include "drau/ops.hpp"

namespace drau {

Conv1x1Params Conv1x1Params::glorot(std::size_t in, std::size_t out, Rng& rng) {
  return {glorot_init({in, out}, rng), Tensor::zeros({out}, true)};
}

void Conv1x1Params::register_with(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".weight", weight);
  set.add(prefix + ".bias", bias);
}

Tensor conv1x1(const Tensor& x, const Conv1x1Params& p) {
  if (x.rank() != 2 || x.dim(1) != p.in()) {
    throw DimensionError("conv1x1: input " + shape_string(x.shape()) + " does not have " + std::to_string(p.in()) +
                         " channels");
  }
  return add(matmul(x, p.weight), p.bias);
}

LSTMParams LSTMParams::uniform(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng, double bound) {
  if (input == 0 || hidden == 0 || layers == 0) throw ConfigError("LSTM sizes must be positive");
  LSTMParams p;
  p.input = input;
  p.hidden = hidden;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : hidden;
    LSTMLayerParams layer;
    layer.w_input = uniform_init({in, 4 * hidden}, bound, rng);
    layer.w_hidden = uniform_init({hidden, 4 * hidden}, bound, rng);
    std::vector<double> bias(4 * hidden, 0.0);
    for (std::size_t j = hidden; j < 2 * hidden; ++j) bias[j] = 1.0;
    layer.bias = Tensor::from({4 * hidden}, std::move(bias), true);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

std::size_t lstm_parameter_count(std::size_t input, std::size_t hidden, std::size_t layers) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : hidden;
    n += (in + hidden) * 4 * hidden + 4 * hidden;
  }
  return n;
}

std::size_t LSTMParams::parameter_count() const { return lstm_parameter_count(input, hidden, layers.size()); }

void LSTMParams::register_with(ParameterSet& set, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto base = prefix + ".l" + std::to_string(l);
    set.add(base + ".w_input", layers[l].w_input);
    set.add(base + ".w_hidden", layers[l].w_hidden);
    set.add(base + ".bias", layers[l].bias);
  }
}

LSTMState lstm_zero_state(std::size_t hidden) {
  return {Tensor::zeros({1, hidden}), Tensor::zeros({1, hidden})};
}

namespace {

const LSTMLayerParams& layer_at(const LSTMParams& p, std::size_t layer) {
  if (layer >= p.layers.size()) throw DimensionError("LSTM layer " + std::to_string(layer) + " does not exist");
  return p.layers[layer];
}

// Cell update from precomputed input-side gate activations x W_x + b.
LSTMState lstm_cell(const Tensor& input_gates, const LSTMState& prev, const LSTMLayerParams& w, std::size_t hidden) {
  if (prev.h.rank() != 2 || prev.h.dim(1) != hidden || prev.c.shape() != prev.h.shape() || prev.h.dim(0) != 1) {
    throw DimensionError("lstm_step: state must be [1 x " + std::to_string(hidden) + "]");
  }
  const auto gates = add(input_gates, matmul(prev.h, w.w_hidden));
  const auto sig = sigmoid(slice(gates, 1, 0, 3 * hidden));
  const auto i = slice(sig, 1, 0, hidden);
  const auto f = slice(sig, 1, hidden, 2 * hidden);
  const auto o = slice(sig, 1, 2 * hidden, 3 * hidden);
  const auto g = tanh(slice(gates, 1, 3 * hidden, 4 * hidden));
  auto c = add(mul(f, prev.c), mul(i, g));
  auto h = mul(o, tanh(c));
  return {std::move(h), std::move(c)};
}

}  // namespace

LSTMState lstm_step(const Tensor& x, const LSTMState& prev, const LSTMParams& p, std::size_t layer) {
  const auto& w = layer_at(p, layer);
  if (x.rank() != 2 || x.dim(0) != 1 || x.dim(1) != w.w_input.dim(0)) {
    throw DimensionError("lstm_step: input " + shape_string(x.shape()) + " does not match layer width " +
                         std::to_string(w.w_input.dim(0)));
  }
  return lstm_cell(add(matmul(x, w.w_input), w.bias), prev, w, p.hidden);
}

Tensor lstm_layer_sequence(const Tensor& xs, const LSTMParams& p, std::size_t layer) {
  const auto& w = layer_at(p, layer);
  if (xs.rank() != 2) throw DimensionError("lstm sequence input must be [N x d], got " + shape_string(xs.shape()));
  const std::size_t steps = xs.dim(0);
  if (steps == 0) throw DegenerateInputError("lstm sequence is empty");
  if (xs.dim(1) != w.w_input.dim(0)) {
    throw DimensionError("lstm sequence width " + std::to_string(xs.dim(1)) + " does not match layer width " +
                         std::to_string(w.w_input.dim(0)));
  }
  const auto input_gates = add(matmul(xs, w.w_input), w.bias);
  auto state = lstm_zero_state(p.hidden);
  std::vector<Tensor> outputs;
  outputs.reserve(steps);
  for (std::size_t n = 0; n < steps; ++n) {
    state = lstm_cell(steps == 1 ? input_gates : slice(input_gates, 0, n, n + 1), state, w, p.hidden);
    outputs.push_back(state.h);
  }
  return steps == 1 ? outputs.front() : concat(outputs, 0);
}

Tensor lstm_sequence(const Tensor& xs, const LSTMParams& p) {
  std::vector<Tensor> per_layer;
  auto current = xs;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    current = lstm_layer_sequence(current, p, l);
    per_layer.push_back(current);
  }
  return per_layer.size() == 1 ? per_layer.front() : concat(per_layer, 1);
}

EmbeddingTables EmbeddingTables::create(std::size_t vocab, std::size_t learned_dim, std::size_t frozen_dim, Rng& rng,
                                        Rng& frozen_rng) {
  if (vocab == 0 || learned_dim == 0 || frozen_dim == 0) throw ConfigError("embedding sizes must be positive");
  EmbeddingTables t;
  t.learned = glorot_init({vocab, learned_dim}, rng);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> frozen(vocab * frozen_dim);
  for (std::size_t r = 0; r < vocab; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < frozen_dim; ++j) {
      frozen[r * frozen_dim + j] = normal(frozen_rng);
      sq += frozen[r * frozen_dim + j] * frozen[r * frozen_dim + j];
    }
    const double norm = std::sqrt(sq);
    for (std::size_t j = 0; j < frozen_dim; ++j) frozen[r * frozen_dim + j] /= norm;
  }
  t.frozen = Tensor::from({vocab, frozen_dim}, std::move(frozen), false);
  return t;
}

void EmbeddingTables::register_with(ParameterSet& set, const std::string& prefix) const {
  set.add(prefix + ".learned", learned);
  set.add(prefix + ".frozen", frozen, false);
}

Tensor embed(std::span<const std::size_t> tokens, const EmbeddingTables& tables) {
  if (tokens.empty()) throw DegenerateInputError("embed: empty token list");
  return concat({tanh(gather_rows(tables.learned, tokens)), gather_rows(tables.frozen, tokens)}, 1);
}

Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::eval || p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double survivor_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.numel());
  for (auto& m : mask) m = keep(rng) ? survivor_scale : 0.0;
  return mul_constant(x, std::move(mask));
}

}  // namespace drau
