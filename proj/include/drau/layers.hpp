#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "drau/parameters.hpp"
#include "drau/random.hpp"
#include "drau/tensor.hpp"

namespace drau {

enum class Mode { train, eval };

/// Per-location affine map over the channel axis: [K x in] -> [K x out].
struct Conv1x1Params {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  static Conv1x1Params glorot(std::size_t in, std::size_t out, Rng& rng);
  std::size_t in() const { return weight.dim(0); }
  std::size_t out() const { return weight.dim(1); }
  std::size_t parameter_count() const { return weight.numel() + bias.numel(); }
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

Tensor conv1x1(const Tensor& x, const Conv1x1Params& p);

/// One LSTM layer. Columns of the gate matrices are ordered i, f, o, g; the
/// input and recurrent halves of the stacked [(in + H) x 4H] matrix are kept
/// as two tensors so the input projection can be computed for all steps at once.
struct LSTMLayerParams {
  Tensor w_input;   // [in x 4H]
  Tensor w_hidden;  // [H x 4H]
  Tensor bias;      // [4H]
};

struct LSTMParams {
  std::vector<LSTMLayerParams> layers;
  std::size_t input = 0;
  std::size_t hidden = 0;

  /// U(-bound, bound) weights, zero biases except the forget gate at 1.
  static LSTMParams uniform(std::size_t input, std::size_t hidden, std::size_t layers, Rng& rng,
                            double bound = 0.08);
  std::size_t parameter_count() const;
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

/// Exact LSTM parameter count for the given sizes.
std::size_t lstm_parameter_count(std::size_t input, std::size_t hidden, std::size_t layers);

struct LSTMState {
  Tensor h;  // [1 x H]
  Tensor c;  // [1 x H]
};

LSTMState lstm_zero_state(std::size_t hidden);

/// Standard LSTM cell: sigmoid gates i, f, o; tanh candidate g;
/// c' = f * c + i * g; h' = o * tanh(c').
LSTMState lstm_step(const Tensor& x, const LSTMState& prev, const LSTMParams& p, std::size_t layer);

/// Hidden states of one layer for every step of `xs` [N x in], from a zero state.
Tensor lstm_layer_sequence(const Tensor& xs, const LSTMParams& p, std::size_t layer);

/// Per-step hidden states of every layer concatenated: [N x layers*H].
Tensor lstm_sequence(const Tensor& xs, const LSTMParams& p);

/// Learned table (passed through tanh) next to a frozen table standing in for
/// pretrained word vectors.
struct EmbeddingTables {
  Tensor learned;  // [vocab x e1], trainable
  Tensor frozen;   // [vocab x e2], no gradient, unit-norm rows

  static EmbeddingTables create(std::size_t vocab, std::size_t learned_dim, std::size_t frozen_dim, Rng& rng,
                                Rng& frozen_rng);
  std::size_t vocab() const { return learned.dim(0); }
  std::size_t width() const { return learned.dim(1) + frozen.dim(1); }
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

/// Row n = tanh(learned[token_n]) ++ frozen[token_n].
Tensor embed(std::span<const std::size_t> tokens, const EmbeddingTables& tables);

/// Inverted dropout: in train mode each unit is zeroed with probability p and
/// survivors are scaled by 1/(1-p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Mode mode, Rng& rng);

}  // namespace drau
