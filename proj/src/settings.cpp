#include "drau/settings.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drau/errors.hpp"

namespace drau {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
  return out;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_u64(key, value));
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("setting '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("setting '" + key + "' expects true or false, got '" + value + "'");
}

const char* merge_name(GlimpseMerge m) { return m == GlimpseMerge::concat ? "concat" : "sum"; }

GlimpseMerge parse_merge(const std::string& value) {
  if (value == "concat") return GlimpseMerge::concat;
  if (value == "sum") return GlimpseMerge::sum;
  throw ConfigError("setting 'glimpse_merge' expects concat or sum, got '" + value + "'");
}

const char* fusion_name(FusionKind k) {
  switch (k) {
    case FusionKind::mcb:
      return "mcb";
    case FusionKind::hadamard:
      return "hadamard";
    case FusionKind::concat:
      return "concat";
  }
  return "";
}

FusionKind parse_fusion(const std::string& value) {
  if (value == "mcb") return FusionKind::mcb;
  if (value == "hadamard") return FusionKind::hadamard;
  if (value == "concat") return FusionKind::concat;
  throw ConfigError("setting 'fusion' expects mcb, hadamard or concat, got '" + value + "'");
}

}  // namespace

KeyValues model_settings(const ModelConfig& c) {
  return {
      {"variant", variant_name(c.variant)},
      {"regions", std::to_string(c.regions)},
      {"region_features", std::to_string(c.region_features)},
      {"joint_width", std::to_string(c.joint_width)},
      {"vocab_size", std::to_string(c.vocab_size)},
      {"answers", std::to_string(c.answers)},
      {"word_embed", std::to_string(c.word_embed)},
      {"pretrained_embed", std::to_string(c.pretrained_embed)},
      {"question_hidden", std::to_string(c.question_hidden)},
      {"question_layers", std::to_string(c.question_layers)},
      {"summary_width", std::to_string(c.summary_width)},
      {"attn_scaled", std::to_string(c.attn_scaled)},
      {"attn_hidden", std::to_string(c.attn_hidden)},
      {"glimpses", std::to_string(c.glimpses)},
      {"attn_output", std::to_string(c.attn_output)},
      {"glimpse_merge", merge_name(c.glimpse_merge)},
      {"fusion", fusion_name(c.fusion)},
      {"sketch_dim", std::to_string(c.sketch_dim)},
      {"signed_sqrt", c.signed_sqrt ? "true" : "false"},
      {"l2_after_fusion", c.l2_after_fusion ? "true" : "false"},
      {"dropout", format_double(c.dropout)},
      {"seed", std::to_string(c.seed)},
      {"embedding_seed", std::to_string(c.embedding_seed)},
  };
}

bool apply_model_setting(ModelConfig& c, const std::string& key, const std::string& v) {
  if (key == "variant") c.variant = parse_variant(v);
  else if (key == "regions") c.regions = parse_size(key, v);
  else if (key == "region_features") c.region_features = parse_size(key, v);
  else if (key == "joint_width") c.joint_width = parse_size(key, v);
  else if (key == "vocab_size") c.vocab_size = parse_size(key, v);
  else if (key == "answers") c.answers = parse_size(key, v);
  else if (key == "word_embed") c.word_embed = parse_size(key, v);
  else if (key == "pretrained_embed") c.pretrained_embed = parse_size(key, v);
  else if (key == "question_hidden") c.question_hidden = parse_size(key, v);
  else if (key == "question_layers") c.question_layers = parse_size(key, v);
  else if (key == "summary_width") c.summary_width = parse_size(key, v);
  else if (key == "attn_scaled") c.attn_scaled = parse_size(key, v);
  else if (key == "attn_hidden") c.attn_hidden = parse_size(key, v);
  else if (key == "glimpses") c.glimpses = parse_size(key, v);
  else if (key == "attn_output") c.attn_output = parse_size(key, v);
  else if (key == "glimpse_merge") c.glimpse_merge = parse_merge(v);
  else if (key == "fusion") c.fusion = parse_fusion(v);
  else if (key == "sketch_dim") c.sketch_dim = parse_size(key, v);
  else if (key == "signed_sqrt") c.signed_sqrt = parse_bool(key, v);
  else if (key == "l2_after_fusion") c.l2_after_fusion = parse_bool(key, v);
  else if (key == "dropout") c.dropout = parse_real(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "embedding_seed") c.embedding_seed = parse_u64(key, v);
  else return false;
  return true;
}

KeyValues train_settings(const TrainConfig& c) {
  return {
      {"lr", format_double(c.lr)},
      {"beta1", format_double(c.beta1)},
      {"beta2", format_double(c.beta2)},
      {"adam_eps", format_double(c.adam_eps)},
      {"batch", std::to_string(c.batch)},
      {"iters", std::to_string(c.iterations)},
      {"dropout", format_double(c.dropout)},
      {"seed", std::to_string(c.seed)},
      {"eval_interval", std::to_string(c.eval_interval)},
      {"variant", variant_name(c.variant)},
  };
}

bool apply_train_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "lr") c.lr = parse_real(key, v);
  else if (key == "beta1") c.beta1 = parse_real(key, v);
  else if (key == "beta2") c.beta2 = parse_real(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_real(key, v);
  else if (key == "batch") c.batch = parse_size(key, v);
  else if (key == "iters") c.iterations = parse_size(key, v);
  else if (key == "dropout") c.dropout = parse_real(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "eval_interval") c.eval_interval = parse_size(key, v);
  else if (key == "variant") c.variant = parse_variant(v);
  else return false;
  return true;
}

KeyValues dataset_settings(const DatasetConfig& c) {
  return {
      {"scenes", std::to_string(c.scenes)},
      {"seed", std::to_string(c.seed)},
      {"grid", std::to_string(c.scene.grid)},
      {"occupancy", format_double(c.scene.occupancy)},
      {"region_features", std::to_string(c.region_features)},
      {"noise", format_double(c.noise)},
      {"questions_per_scene", std::to_string(c.questions_per_scene)},
      {"yesno_share", format_double(c.yesno_share)},
      {"number_share", format_double(c.number_share)},
      {"corruption", format_double(c.corruption)},
  };
}

bool apply_dataset_setting(DatasetConfig& c, const std::string& key, const std::string& v) {
  if (key == "scenes") c.scenes = parse_size(key, v);
  else if (key == "seed") c.seed = parse_u64(key, v);
  else if (key == "grid") c.scene.grid = parse_size(key, v);
  else if (key == "occupancy") c.scene.occupancy = parse_real(key, v);
  else if (key == "region_features") c.region_features = parse_size(key, v);
  else if (key == "noise") c.noise = parse_real(key, v);
  else if (key == "questions_per_scene") c.questions_per_scene = parse_size(key, v);
  else if (key == "yesno_share") c.yesno_share = parse_real(key, v);
  else if (key == "number_share") c.number_share = parse_real(key, v);
  else if (key == "corruption") c.corruption = parse_real(key, v);
  else return false;
  return true;
}

KeyValues parse_key_values(const std::string& text, const std::string& origin) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": expected key=value, got '" + t + "'");
    }
    out.emplace_back(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return out;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str(), path.string());
}

}  // namespace drau
