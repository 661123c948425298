#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drau/layers.hpp"
#include "drau/parameters.hpp"
#include "drau/random.hpp"
#include "drau/tensor.hpp"

namespace drau {

enum class AttentionTarget { visual, textual };
enum class AttentionKind { convolutional, recurrent };
/// How the per-glimpse outputs are combined into the unit's output vector.
enum class GlimpseMerge { concat, sum };

inline constexpr double kPReLUInitSlope = 0.25;

struct RAUConfig {
  std::size_t positions = 16;  // K; 0 accepts any length (questions)
  std::size_t channels = 64;   // phi, width of the joint input X
  std::size_t scaled = 64;     // width after the 1x1 scaling convolution
  std::size_t lstm_hidden = 64;
  std::size_t glimpses = 2;
  std::size_t feature_width = 64;  // width of the attended features f
  std::size_t output = 64;
  GlimpseMerge merge = GlimpseMerge::concat;
  AttentionTarget target = AttentionTarget::visual;

  void validate() const;
  std::size_t output_width() const { return merge == GlimpseMerge::concat ? glimpses * output : output; }
};

/// Recurrent attention unit weights.
struct RAUParams {
  RAUConfig config;
  Conv1x1Params scale;      // W_a
  Tensor scale_slope;       // [scaled]
  LSTMParams lstm;          // one unidirectional layer over the positions
  Conv1x1Params glimpse;    // W_g: hidden -> glimpses
  Tensor glimpse_slope;     // [glimpses]
  Conv1x1Params out;        // W_out: feature_width -> output
  Tensor out_slope;         // [output]

  static RAUParams create(const RAUConfig& cfg, Rng& rng);
  std::size_t parameter_count() const;
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

/// Conventional attention: two stacked 1x1 convolutions produce the glimpse
/// logits; pooling and output layer are shared with the RAU.
struct ConvAttnParams {
  RAUConfig config;          // same interface sizes as the RAU it replaces
  std::size_t hidden_width = 0;
  Conv1x1Params hidden;      // channels -> hidden_width
  Tensor hidden_slope;       // [hidden_width]
  Conv1x1Params logits;      // hidden_width -> glimpses
  Tensor logits_slope;       // [glimpses]
  Conv1x1Params out;
  Tensor out_slope;

  static ConvAttnParams create(const RAUConfig& cfg, std::size_t hidden_width, Rng& rng);
  std::size_t parameter_count() const;
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

/// Normalized attention weights [G x K] plus labels for export.
struct AttentionMap {
  Tensor weights;                   // [glimpses x positions], part of the graph
  std::vector<std::uint8_t> mask;   // per position, 1 = attendable
  std::vector<std::string> labels;  // region coordinates or tokens; may be empty

  std::size_t glimpses() const { return weights.dim(0); }
  std::size_t positions() const { return weights.dim(1); }
  std::vector<double> row(std::size_t glimpse) const;
};

struct AttentionOutput {
  Tensor y;  // [1 x output_width]
  AttentionMap attention;
};

// Stage ops of the recurrent unit.
Tensor rau_scale(const Tensor& x, const RAUParams& p);       // PReLU(W_a X): [K x scaled]
Tensor rau_scan(const Tensor& scaled, const RAUParams& p);   // LSTM over positions: [K x hidden]
/// softmax over positions of PReLU(W_g h), one distribution per glimpse: [G x K].
Tensor attention_weights(const Tensor& logits_input, const Conv1x1Params& glimpse, const Tensor& slope,
                         std::span<const std::uint8_t> mask);
/// Row g = sum_n attn[g, n] f_n: [G x d_f].
Tensor apply_attention(const AttentionMap& attn, const Tensor& features);
Tensor apply_attention(const Tensor& weights, const Tensor& features);
/// PReLU(W_out att) per glimpse, merged into one row: [1 x output_width].
Tensor attention_output(const Tensor& attended, const Conv1x1Params& out, const Tensor& slope, GlimpseMerge merge);

/// Full recurrent attention unit. `mask` may be empty (all positions valid).
AttentionOutput rau_forward(const Tensor& x, const Tensor& features, const RAUParams& p,
                            std::span<const std::uint8_t> mask = {});

AttentionOutput conv_attention_forward(const Tensor& x, const Tensor& features, const ConvAttnParams& p,
                                       std::span<const std::uint8_t> mask = {});

/// Exact trainable parameter counts. An RAU config with lstm_hidden == 0
/// counts the unit with its LSTM removed (W_g reading the scaled features).
std::size_t rau_parameter_count(const RAUConfig& cfg);
std::size_t conv_attention_parameter_count(const RAUConfig& cfg, std::size_t hidden_width);

struct AttentionSizing {
  std::size_t conv_hidden = 0;
  std::size_t rau_count = 0;
  std::size_t conv_count = 0;
  double relative_gap = 0.0;  // |conv - rau| / rau
  bool within_tolerance = false;
};

inline constexpr double kParameterMatchTolerance = 0.02;

/// Hidden width of the conventional unit whose parameter count is closest to
/// the recurrent unit's. When no width lands within 2% the nearest one is
/// returned with within_tolerance == false and a warning on stderr.
AttentionSizing match_parameter_counts(const RAUConfig& rau);

}  // namespace drau
