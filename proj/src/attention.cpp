#include "drau/attention.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "drau/errors.hpp"
#include "drau/ops.hpp"

namespace drau {

void RAUConfig::validate() const {
  if (channels == 0 || scaled == 0 || glimpses == 0 || feature_width == 0 || output == 0) {
    throw ConfigError("attention unit sizes must be positive");
  }
}

namespace {

Tensor slopes(std::size_t n) { return Tensor::full({n}, kPReLUInitSlope, true); }

void check_inputs(const Tensor& x, const Tensor& features, const RAUConfig& cfg, std::span<const std::uint8_t> mask) {
  if (x.rank() != 2 || features.rank() != 2) throw DimensionError("attention inputs must be matrices");
  if (x.dim(0) != features.dim(0)) {
    throw DimensionError("attention: X has " + std::to_string(x.dim(0)) + " positions but f has " +
                         std::to_string(features.dim(0)));
  }
  if (cfg.positions != 0 && x.dim(0) != cfg.positions) {
    throw DimensionError("attention: expected " + std::to_string(cfg.positions) + " positions, got " +
                         std::to_string(x.dim(0)));
  }
  if (x.dim(1) != cfg.channels) {
    throw DimensionError("attention: X has " + std::to_string(x.dim(1)) + " channels, expected " +
                         std::to_string(cfg.channels));
  }
  if (features.dim(1) != cfg.feature_width) {
    throw DimensionError("attention: f has width " + std::to_string(features.dim(1)) + ", expected " +
                         std::to_string(cfg.feature_width));
  }
  if (!mask.empty()) {
    if (mask.size() != x.dim(0)) throw DimensionError("attention: mask length does not match positions");
    if (std::none_of(mask.begin(), mask.end(), [](auto m) { return m != 0; })) {
      throw DegenerateInputError("attention: every position is masked");
    }
  }
}

AttentionOutput finish(const Tensor& weights, const Tensor& features, const Conv1x1Params& out, const Tensor& slope,
                       GlimpseMerge merge, std::span<const std::uint8_t> mask) {
  AttentionMap map;
  map.weights = weights;
  map.mask.assign(mask.begin(), mask.end());
  if (map.mask.empty()) map.mask.assign(weights.dim(1), 1);
  auto y = attention_output(apply_attention(weights, features), out, slope, merge);
  return {std::move(y), std::move(map)};
}

}  // namespace

RAUParams RAUParams::create(const RAUConfig& cfg, Rng& rng) {
  cfg.validate();
  if (cfg.lstm_hidden == 0) throw ConfigError("a recurrent attention unit needs a positive LSTM hidden size");
  RAUParams p;
  p.config = cfg;
  p.scale = Conv1x1Params::glorot(cfg.channels, cfg.scaled, rng);
  p.scale_slope = slopes(cfg.scaled);
  p.lstm = LSTMParams::uniform(cfg.scaled, cfg.lstm_hidden, 1, rng);
  p.glimpse = Conv1x1Params::glorot(cfg.lstm_hidden, cfg.glimpses, rng);
  p.glimpse_slope = slopes(cfg.glimpses);
  p.out = Conv1x1Params::glorot(cfg.feature_width, cfg.output, rng);
  p.out_slope = slopes(cfg.output);
  return p;
}

std::size_t RAUParams::parameter_count() const {
  return scale.parameter_count() + scale_slope.numel() + lstm.parameter_count() + glimpse.parameter_count() +
         glimpse_slope.numel() + out.parameter_count() + out_slope.numel();
}

void RAUParams::register_with(ParameterSet& set, const std::string& prefix) const {
  scale.register_with(set, prefix + ".scale");
  set.add(prefix + ".scale_slope", scale_slope);
  lstm.register_with(set, prefix + ".lstm");
  glimpse.register_with(set, prefix + ".glimpse");
  set.add(prefix + ".glimpse_slope", glimpse_slope);
  out.register_with(set, prefix + ".out");
  set.add(prefix + ".out_slope", out_slope);
}

ConvAttnParams ConvAttnParams::create(const RAUConfig& cfg, std::size_t hidden_width, Rng& rng) {
  cfg.validate();
  if (hidden_width == 0) throw ConfigError("convolutional attention hidden width must be positive");
  ConvAttnParams p;
  p.config = cfg;
  p.hidden_width = hidden_width;
  p.hidden = Conv1x1Params::glorot(cfg.channels, hidden_width, rng);
  p.hidden_slope = slopes(hidden_width);
  p.logits = Conv1x1Params::glorot(hidden_width, cfg.glimpses, rng);
  p.logits_slope = slopes(cfg.glimpses);
  p.out = Conv1x1Params::glorot(cfg.feature_width, cfg.output, rng);
  p.out_slope = slopes(cfg.output);
  return p;
}

std::size_t ConvAttnParams::parameter_count() const {
  return hidden.parameter_count() + hidden_slope.numel() + logits.parameter_count() + logits_slope.numel() +
         out.parameter_count() + out_slope.numel();
}

void ConvAttnParams::register_with(ParameterSet& set, const std::string& prefix) const {
  hidden.register_with(set, prefix + ".hidden");
  set.add(prefix + ".hidden_slope", hidden_slope);
  logits.register_with(set, prefix + ".logits");
  set.add(prefix + ".logits_slope", logits_slope);
  out.register_with(set, prefix + ".out");
  set.add(prefix + ".out_slope", out_slope);
}

std::vector<double> AttentionMap::row(std::size_t glimpse) const {
  const auto k = positions();
  const auto d = weights.data();
  return {d.begin() + glimpse * k, d.begin() + (glimpse + 1) * k};
}

Tensor rau_scale(const Tensor& x, const RAUParams& p) { return prelu(conv1x1(x, p.scale), p.scale_slope); }

Tensor rau_scan(const Tensor& scaled, const RAUParams& p) { return lstm_layer_sequence(scaled, p.lstm, 0); }

Tensor attention_weights(const Tensor& logits_input, const Conv1x1Params& glimpse, const Tensor& slope,
                         std::span<const std::uint8_t> mask) {
  const auto logits = prelu(conv1x1(logits_input, glimpse), slope);  // [K x G]
  return transpose(softmax(logits, 0, mask));
}

Tensor apply_attention(const Tensor& weights, const Tensor& features) {
  if (weights.rank() != 2 || features.rank() != 2 || weights.dim(1) != features.dim(0)) {
    throw DimensionError("apply_attention: weights " + shape_string(weights.shape()) + " do not match features " +
                         shape_string(features.shape()));
  }
  return matmul(weights, features);
}

Tensor apply_attention(const AttentionMap& attn, const Tensor& features) {
  return apply_attention(attn.weights, features);
}

Tensor attention_output(const Tensor& attended, const Conv1x1Params& out, const Tensor& slope, GlimpseMerge merge) {
  if (merge == GlimpseMerge::sum) return prelu(conv1x1(sum(attended, 0), out), slope);
  const auto y = prelu(conv1x1(attended, out), slope);  // [G x output]
  return reshape(y, {1, y.numel()});
}

AttentionOutput rau_forward(const Tensor& x, const Tensor& features, const RAUParams& p,
                            std::span<const std::uint8_t> mask) {
  check_inputs(x, features, p.config, mask);
  const auto scaled = rau_scale(x, p);
  const auto hidden = rau_scan(scaled, p);
  const auto weights = attention_weights(hidden, p.glimpse, p.glimpse_slope, mask);
  return finish(weights, features, p.out, p.out_slope, p.config.merge, mask);
}

AttentionOutput conv_attention_forward(const Tensor& x, const Tensor& features, const ConvAttnParams& p,
                                       std::span<const std::uint8_t> mask) {
  check_inputs(x, features, p.config, mask);
  const auto hidden = prelu(conv1x1(x, p.hidden), p.hidden_slope);
  const auto weights = attention_weights(hidden, p.logits, p.logits_slope, mask);
  return finish(weights, features, p.out, p.out_slope, p.config.merge, mask);
}

namespace {

// Parameters shared by both kinds: glimpse slopes, output layer and its slopes.
std::size_t shared_count(const RAUConfig& cfg) {
  return cfg.glimpses + cfg.feature_width * cfg.output + cfg.output + cfg.output;
}

}  // namespace

std::size_t rau_parameter_count(const RAUConfig& cfg) {
  const std::size_t scale = cfg.channels * cfg.scaled + cfg.scaled + cfg.scaled;
  const std::size_t lstm = cfg.lstm_hidden == 0 ? 0 : lstm_parameter_count(cfg.scaled, cfg.lstm_hidden, 1);
  const std::size_t glimpse_in = cfg.lstm_hidden == 0 ? cfg.scaled : cfg.lstm_hidden;
  return scale + lstm + glimpse_in * cfg.glimpses + cfg.glimpses + shared_count(cfg);
}

std::size_t conv_attention_parameter_count(const RAUConfig& cfg, std::size_t hidden_width) {
  return cfg.channels * hidden_width + hidden_width + hidden_width + hidden_width * cfg.glimpses + cfg.glimpses +
         shared_count(cfg);
}

AttentionSizing match_parameter_counts(const RAUConfig& rau) {
  rau.validate();
  AttentionSizing s;
  s.rau_count = rau_parameter_count(rau);
  // The conv count is affine in the hidden width.
  const std::size_t fixed = conv_attention_parameter_count(rau, 0);
  const std::size_t per_unit = rau.channels + 2 + rau.glimpses;
  const double ideal = s.rau_count > fixed ? static_cast<double>(s.rau_count - fixed) / per_unit : 1.0;
  const auto center = static_cast<std::size_t>(std::max(1.0, std::floor(ideal)));
  double best_gap = INFINITY;
  for (std::size_t w = center > 1 ? center - 1 : 1; w <= center + 1; ++w) {
    const auto count = conv_attention_parameter_count(rau, w);
    const double gap = std::abs(static_cast<double>(count) - static_cast<double>(s.rau_count)) / s.rau_count;
    if (gap < best_gap) {
      best_gap = gap;
      s.conv_hidden = w;
      s.conv_count = count;
    }
  }
  s.relative_gap = best_gap;
  s.within_tolerance = best_gap <= kParameterMatchTolerance;
  if (!s.within_tolerance) {
    std::cerr << "warning: closest convolutional attention (hidden " << s.conv_hidden << ", " << s.conv_count
              << " parameters) differs from the recurrent unit (" << s.rau_count << ") by " << best_gap * 100.0
              << "%\n";
  }
  return s;
}

}  // namespace drau
