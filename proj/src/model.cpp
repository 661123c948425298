#include "drau/model.hpp"

#include <algorithm>

#include "drau/errors.hpp"
#include "drau/ops.hpp"

namespace drau {

namespace {

// Independent init streams per component so that swapping one attention
// unit leaves every other initial weight untouched.
enum Stream : std::uint64_t {
  kQuestionStream = 1,
  kImageStream = 2,
  kSummaryStream = 3,
  kVisualAttnStream = 4,
  kTextualAttnStream = 5,
  kClassifierStream = 6,
  kSketchStream = 7,
};

struct VariantInfo {
  Variant variant;
  const char* name;
};

constexpr VariantInfo kVariants[] = {
    {Variant::simple_conv, "simple-conv"}, {Variant::simple_rvau, "simple-rvau"}, {Variant::dca, "dca"},
    {Variant::dca_rvau, "dca-rvau"},       {Variant::dca_rtau, "dca-rtau"},       {Variant::drau, "drau"},
};

void record(Trace* trace, const char* name, const Tensor& t) {
  if (trace) trace->emplace_back(name, t);
}

std::size_t last_real_word(std::span<const std::uint8_t> mask) {
  for (std::size_t i = mask.size(); i-- > 0;)
    if (mask[i]) return i;
  throw DegenerateInputError("question contains only padding");
}

}  // namespace

std::string variant_name(Variant v) {
  for (const auto& info : kVariants)
    if (info.variant == v) return info.name;
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (const auto& info : kVariants)
    if (name == info.name) return info.variant;
  throw ConfigError("unknown variant '" + name + "' (expected drau, dca, dca-rvau, dca-rtau, simple-conv, simple-rvau)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> v{Variant::simple_conv, Variant::simple_rvau, Variant::dca,
                                      Variant::dca_rvau,    Variant::dca_rtau,    Variant::drau};
  return v;
}

bool is_simple_net(Variant v) { return v == Variant::simple_conv || v == Variant::simple_rvau; }

AttentionKind visual_attention_kind(Variant v) {
  switch (v) {
    case Variant::simple_rvau:
    case Variant::dca_rvau:
    case Variant::drau:
      return AttentionKind::recurrent;
    default:
      return AttentionKind::convolutional;
  }
}

std::optional<AttentionKind> textual_attention_kind(Variant v) {
  switch (v) {
    case Variant::simple_conv:
    case Variant::simple_rvau:
      return std::nullopt;
    case Variant::dca_rtau:
    case Variant::drau:
      return AttentionKind::recurrent;
    default:
      return AttentionKind::convolutional;
  }
}

void ModelConfig::validate() const {
  const std::size_t sizes[] = {regions,         region_features, joint_width, vocab_size,    answers,
                               word_embed,      pretrained_embed, question_hidden, question_layers, summary_width,
                               attn_scaled,     attn_hidden,      glimpses,    attn_output,   sketch_dim};
  for (auto s : sizes)
    if (s == 0) throw ConfigError("model sizes must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

RAUConfig ModelConfig::visual_attention_config() const {
  RAUConfig c;
  c.positions = regions;
  c.channels = joint_width + summary_width;
  c.feature_width = c.channels;
  c.scaled = attn_scaled;
  c.lstm_hidden = attn_hidden;
  c.glimpses = glimpses;
  c.output = attn_output;
  c.merge = glimpse_merge;
  c.target = AttentionTarget::visual;
  return c;
}

RAUConfig ModelConfig::textual_attention_config() const {
  RAUConfig c = visual_attention_config();
  c.positions = 0;
  c.channels = question_width() + summary_width;
  c.feature_width = c.channels;
  c.target = AttentionTarget::textual;
  return c;
}

AttentionUnit AttentionUnit::create(AttentionKind kind, const RAUConfig& cfg, Rng& rng) {
  AttentionUnit u;
  u.kind = kind;
  if (kind == AttentionKind::recurrent) {
    u.rau = RAUParams::create(cfg, rng);
  } else {
    u.conv = ConvAttnParams::create(cfg, match_parameter_counts(cfg).conv_hidden, rng);
  }
  return u;
}

AttentionOutput AttentionUnit::forward(const Tensor& x, const Tensor& features,
                                       std::span<const std::uint8_t> mask) const {
  return kind == AttentionKind::recurrent ? rau_forward(x, features, rau, mask)
                                          : conv_attention_forward(x, features, conv, mask);
}

std::size_t AttentionUnit::parameter_count() const {
  return kind == AttentionKind::recurrent ? rau.parameter_count() : conv.parameter_count();
}

void AttentionUnit::register_with(ParameterSet& set, const std::string& prefix) const {
  if (kind == AttentionKind::recurrent) {
    rau.register_with(set, prefix + ".rau");
  } else {
    conv.register_with(set, prefix + ".conv");
  }
}

ModelParams ModelParams::create(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;

  auto question_rng = make_rng(cfg.seed, kQuestionStream);
  Rng frozen_rng(cfg.embedding_seed);
  p.question.embedding =
      EmbeddingTables::create(cfg.vocab_size, cfg.word_embed, cfg.pretrained_embed, question_rng, frozen_rng);
  p.question.lstm = LSTMParams::uniform(p.question.embedding.width(), cfg.question_hidden, cfg.question_layers,
                                        question_rng);
  p.question.dropout = cfg.dropout;

  auto image_rng = make_rng(cfg.seed, kImageStream);
  p.image_projection = Conv1x1Params::glorot(cfg.region_features, cfg.joint_width, image_rng);
  p.image_slope = Tensor::full({cfg.joint_width}, kPReLUInitSlope, true);

  auto summary_rng = make_rng(cfg.seed, kSummaryStream);
  p.question_summary = Conv1x1Params::glorot(cfg.question_width(), cfg.summary_width, summary_rng);
  p.question_summary_slope = Tensor::full({cfg.summary_width}, kPReLUInitSlope, true);

  const bool simple = is_simple_net(cfg.variant);
  if (!simple) {
    p.image_summary = Conv1x1Params::glorot(cfg.joint_width, cfg.summary_width, summary_rng);
    p.image_summary_slope = Tensor::full({cfg.summary_width}, kPReLUInitSlope, true);
  }

  auto visual_rng = make_rng(cfg.seed, kVisualAttnStream);
  p.visual = AttentionUnit::create(visual_attention_kind(cfg.variant), cfg.visual_attention_config(), visual_rng);
  if (auto kind = textual_attention_kind(cfg.variant)) {
    auto textual_rng = make_rng(cfg.seed, kTextualAttnStream);
    p.textual = AttentionUnit::create(*kind, cfg.textual_attention_config(), textual_rng);
  }

  const std::size_t vis_width = cfg.visual_attention_config().output_width();
  std::size_t classifier_in = vis_width;
  if (!simple) {
    p.fusion.kind = cfg.fusion;
    p.fusion.signed_sqrt = cfg.signed_sqrt;
    p.fusion.l2_normalize = cfg.l2_after_fusion;
    const std::size_t txt_width = cfg.textual_attention_config().output_width();
    if (cfg.fusion == FusionKind::mcb) {
      p.fusion.sketch = SketchParams::random(txt_width, vis_width, cfg.sketch_dim, derive_seed(cfg.seed, kSketchStream));
    }
    classifier_in = fused_width(p.fusion, txt_width, vis_width);
  }
  auto classifier_rng = make_rng(cfg.seed, kClassifierStream);
  p.classifier = Conv1x1Params::glorot(classifier_in, cfg.answers, classifier_rng);
  return p;
}

ParameterSet ModelParams::parameters() const {
  ParameterSet set;
  question.embedding.register_with(set, "question.embedding");
  question.lstm.register_with(set, "question.lstm");
  image_projection.register_with(set, "image.projection");
  set.add("image.slope", image_slope);
  question_summary.register_with(set, "joint.question_summary");
  set.add("joint.question_summary_slope", question_summary_slope);
  if (image_summary) {
    image_summary->register_with(set, "joint.image_summary");
    set.add("joint.image_summary_slope", image_summary_slope);
  }
  visual.register_with(set, "attention.visual");
  if (textual) textual->register_with(set, "attention.textual");
  classifier.register_with(set, "classifier");
  return set;
}

std::vector<std::uint8_t> token_mask(std::span<const std::size_t> tokens) {
  std::vector<std::uint8_t> mask(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) mask[i] = tokens[i] != kPadToken;
  return mask;
}

Tensor encode_question(std::span<const std::size_t> tokens, const QuestionEncoderParams& p, Mode mode, Rng& rng) {
  if (tokens.empty()) throw DegenerateInputError("empty question");
  auto current = embed(tokens, p.embedding);
  std::vector<Tensor> layers;
  for (std::size_t l = 0; l < p.lstm.layers.size(); ++l) {
    current = dropout(lstm_layer_sequence(current, p.lstm, l), p.dropout, mode, rng);
    layers.push_back(current);
  }
  return layers.size() == 1 ? layers.front() : concat(layers, 1);
}

Tensor encode_image(const Tensor& regions, const ModelParams& p) {
  const auto& cfg = p.config;
  if (regions.rank() != 2 || regions.dim(0) != cfg.regions || regions.dim(1) != cfg.region_features) {
    throw DimensionError("encode_image: expected [" + std::to_string(cfg.regions) + "x" +
                         std::to_string(cfg.region_features) + "] regions, got " + shape_string(regions.shape()));
  }
  return prelu(conv1x1(l2_normalize(regions, 1), p.image_projection), p.image_slope);
}

JointRepresentation joint_representation(const Tensor& image, const Tensor& question, std::size_t last_word,
                                         const ModelParams& p) {
  const std::size_t regions = image.dim(0);
  const std::size_t words = question.dim(0);
  if (last_word >= words) throw DimensionError("joint_representation: last word index out of range");
  const auto q_summary =
      prelu(conv1x1(slice(question, 0, last_word, last_word + 1), p.question_summary), p.question_summary_slope);
  JointRepresentation joint;
  joint.visual = concat({image, broadcast_to(q_summary, {regions, q_summary.dim(1)})}, 1);
  if (p.image_summary) {
    const auto v_summary = prelu(conv1x1(mean(image, 0), *p.image_summary), p.image_summary_slope);
    joint.textual = concat({question, broadcast_to(v_summary, {words, v_summary.dim(1)})}, 1);
  }
  return joint;
}

namespace {

struct Encoded {
  Tensor question;
  Tensor image;
  JointRepresentation joint;
  std::vector<std::uint8_t> mask;
};

Encoded encode_inputs(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng, Trace* trace) {
  Encoded e;
  e.mask = token_mask(input.tokens);
  const auto last = last_real_word(e.mask);
  e.question = encode_question(input.tokens, p.question, mode, rng);
  record(trace, "question", e.question);
  e.image = encode_image(input.regions, p);
  record(trace, "image", e.image);
  e.joint = joint_representation(e.image, e.question, last, p);
  record(trace, "joint.visual", e.joint.visual);
  if (e.joint.textual) record(trace, "joint.textual", *e.joint.textual);
  return e;
}

}  // namespace

ForwardResult simple_net_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng, Trace* trace) {
  if (p.textual) throw ConfigError("Simple Net takes visual attention only");
  if (input.tokens.empty()) throw DegenerateInputError("empty question");
  const auto e = encode_inputs(input, p, mode, rng, trace);
  auto vis = p.visual.forward(e.joint.visual, e.joint.visual);
  record(trace, "attention.visual", vis.y);
  ForwardResult r;
  r.logits = conv1x1(vis.y, p.classifier);
  record(trace, "logits", r.logits);
  r.visual = std::move(vis.attention);
  return r;
}

ForwardResult drau_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng, Trace* trace) {
  if (!p.textual || !p.image_summary) throw ConfigError("DRAU needs both textual and visual attention");
  if (input.tokens.empty()) throw DegenerateInputError("empty question");
  const auto e = encode_inputs(input, p, mode, rng, trace);
  auto txt = p.textual->forward(*e.joint.textual, *e.joint.textual, e.mask);
  record(trace, "attention.textual", txt.y);
  auto vis = p.visual.forward(e.joint.visual, e.joint.visual);
  record(trace, "attention.visual", vis.y);
  auto fused = dropout(fuse(txt.y, vis.y, p.fusion), p.config.dropout, mode, rng);
  record(trace, "fusion", fused);
  ForwardResult r;
  r.logits = conv1x1(fused, p.classifier);
  record(trace, "logits", r.logits);
  r.visual = std::move(vis.attention);
  r.textual = std::move(txt.attention);
  return r;
}

ForwardResult model_forward(const ModelInput& input, const ModelParams& p, Mode mode, Rng& rng, Trace* trace) {
  return is_simple_net(p.config.variant) ? simple_net_forward(input, p, mode, rng, trace)
                                         : drau_forward(input, p, mode, rng, trace);
}

std::size_t predict_answer(const Tensor& logits) {
  const auto z = logits.data();
  if (z.empty()) throw ContractError("predict_answer: empty logits");
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

Tensor cross_entropy_loss(const Tensor& logits, std::size_t target) { return softmax_cross_entropy(logits, target); }

}  // namespace drau
