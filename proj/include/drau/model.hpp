#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drau/attention.hpp"
#include "drau/fusion.hpp"
#include "drau/layers.hpp"
#include "drau/parameters.hpp"
#include "drau/random.hpp"
#include "drau/tensor.hpp"

namespace drau {

/// The architectures compared in the attention ablations.
enum class Variant {
  simple_conv,  // Simple Net, convolutional visual attention
  simple_rvau,  // Simple Net, recurrent visual attention
  dca,          // dual convolutional attention
  dca_rvau,     // conv text attention, recurrent visual attention
  dca_rtau,     // recurrent text attention, conv visual attention
  drau,         // recurrent text and visual attention
};

std::string variant_name(Variant v);
/// Accepts the names produced by variant_name; throws ConfigError otherwise.
Variant parse_variant(const std::string& name);
const std::vector<Variant>& all_variants();
bool is_simple_net(Variant v);
AttentionKind visual_attention_kind(Variant v);
/// Textual attention kind; nullopt for Simple Net.
std::optional<AttentionKind> textual_attention_kind(Variant v);

inline constexpr std::size_t kPadToken = 0;

struct ModelConfig {
  Variant variant = Variant::drau;
  std::size_t regions = 16;
  std::size_t region_features = 20;
  std::size_t joint_width = 64;      // image projection width
  std::size_t vocab_size = 64;
  std::size_t answers = 36;
  std::size_t word_embed = 32;       // learned embedding width
  std::size_t pretrained_embed = 32; // frozen table width
  std::size_t question_hidden = 64;
  std::size_t question_layers = 2;
  std::size_t summary_width = 64;    // projected cross-modal summaries
  std::size_t attn_scaled = 64;
  std::size_t attn_hidden = 64;
  std::size_t glimpses = 2;
  std::size_t attn_output = 64;
  GlimpseMerge glimpse_merge = GlimpseMerge::concat;
  FusionKind fusion = FusionKind::mcb;
  std::size_t sketch_dim = 1024;
  bool signed_sqrt = true;
  bool l2_after_fusion = true;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  /// Seed of the frozen word table; shared by every model built for a dataset.
  std::uint64_t embedding_seed = 0x61f0c3;

  void validate() const;
  std::size_t question_width() const { return question_hidden * question_layers; }
  RAUConfig visual_attention_config() const;
  RAUConfig textual_attention_config() const;
};

/// Either kind of attention unit behind one interface.
struct AttentionUnit {
  AttentionKind kind = AttentionKind::recurrent;
  RAUParams rau;
  ConvAttnParams conv;

  static AttentionUnit create(AttentionKind kind, const RAUConfig& cfg, Rng& rng);
  AttentionOutput forward(const Tensor& x, const Tensor& features, std::span<const std::uint8_t> mask = {}) const;
  std::size_t parameter_count() const;
  void register_with(ParameterSet& set, const std::string& prefix) const;
};

struct QuestionEncoderParams {
  EmbeddingTables embedding;
  LSTMParams lstm;
  double dropout = 0.3;
};

struct ModelParams {
  ModelConfig config;
  QuestionEncoderParams question;
  Conv1x1Params image_projection;
  Tensor image_slope;
  Conv1x1Params question_summary;  // projects the final question state for tiling over regions
  Tensor question_summary_slope;
  std::optional<Conv1x1Params> image_summary;  // projects the region mean for tiling over words
  Tensor image_summary_slope;
  AttentionUnit visual;
  std::optional<AttentionUnit> textual;
  FusionConfig fusion;
  Conv1x1Params classifier;  // W_ans

  static ModelParams create(const ModelConfig& cfg);
  /// Every tensor in a fixed order, frozen table included (not trainable).
  ParameterSet parameters() const;
  std::size_t trainable_count() const { return parameters().trainable_count(); }
};

struct ModelInput {
  Tensor regions;                   // [K x region_features]
  std::vector<std::size_t> tokens;  // question ids; kPadToken entries are masked
};

/// Named intermediate activations recorded during a forward pass.
using Trace = std::vector<std::pair<std::string, Tensor>>;

struct ForwardResult {
  Tensor logits;  // [1 x answers]
  std::optional<AttentionMap> visual;
  std::optional<AttentionMap> textual;
};

/// Embedding -> stacked LSTM with dropout after every layer -> per-word
/// concatenation of all layer states: [N x layers*hidden].
Tensor encode_question(std::span<const std::size_t> tokens, const QuestionEncoderParams& p, Mode mode, Rng& rng);

/// Row-wise l2 normalization, then 1x1 convolution and PReLU: [K x joint_width].
Tensor encode_image(const Tensor& regions, const ModelParams& p);

struct JointRepresentation {
  Tensor visual;                 // [K x (joint_width + summary_width)]
  std::optional<Tensor> textual; // [N x (question_width + summary_width)], DRAU family only
};

/// Each branch gets its own features next to a tiled, projected summary of the
/// other modality: the question state at `last_word` for the regions, the mean
/// region feature for the words.
JointRepresentation joint_representation(const Tensor& image, const Tensor& question, std::size_t last_word,
                                         const ModelParams& p);

ForwardResult simple_net_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng,
                                 Trace* trace = nullptr);
ForwardResult drau_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng,
                           Trace* trace = nullptr);
/// Dispatches on the variant.
ForwardResult model_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng,
                            Trace* trace = nullptr);

/// argmax with ties broken towards the lowest index.
std::size_t predict_answer(const Tensor& logits);

/// -log softmax(logits)[target].
Tensor cross_entropy_loss(const Tensor& logits, std::size_t target);

/// Positions of non-pad tokens (1) and pads (0).
std::vector<std::uint8_t> token_mask(std::span<const std::size_t> tokens);

}  // namespace drau
