#include "drau/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "drau/autograd.hpp"
#include "drau/errors.hpp"
#include "drau/metrics.hpp"
#include "drau/settings.hpp"

namespace drau {

namespace {

constexpr std::uint64_t kOrderStream = 0x0de5;
constexpr std::uint64_t kStepStream = 0x57e9;
constexpr const char* kMagic = "drau-checkpoint";

std::vector<Tensor> trainable(const ParameterSet& set) {
  std::vector<Tensor> out;
  for (const auto& p : set.entries())
    if (p.trainable) out.push_back(p.value);
  return out;
}

std::vector<std::string> trainable_names(const ParameterSet& set) {
  std::vector<std::string> out;
  for (const auto& p : set.entries())
    if (p.trainable) out.push_back(p.name);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (batch == 0) throw ConfigError("batch size must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
}

AdamState AdamState::zeros(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params.entries()) {
    if (!p.trainable) continue;
    s.m.emplace_back(p.value.numel(), 0.0);
    s.v.emplace_back(p.value.numel(), 0.0);
  }
  return s;
}

void adam_step(ParameterSet& params, std::span<const std::vector<double>> grads, AdamState& state,
               const TrainConfig& cfg) {
  auto leaves = trainable(params);
  if (grads.size() != leaves.size() || state.m.size() != leaves.size() || state.v.size() != leaves.size()) {
    throw ContractError("adam_step: " + std::to_string(leaves.size()) + " trainable tensors, " +
                        std::to_string(grads.size()) + " gradients, " + std::to_string(state.m.size()) +
                        " moment buffers");
  }
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    const auto n = leaves[k].numel();
    if (grads[k].size() != n || state.m[k].size() != n || state.v[k].size() != n) {
      throw ContractError("adam_step: size mismatch for tensor " + std::to_string(k) + " of shape " +
                          shape_string(leaves[k].shape()));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto w = leaves[k].mutable_data();
    auto& m = state.m[k];
    auto& v = state.v[k];
    const auto& g = grads[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

EvalReport evaluate_predictions(const std::vector<VQASample>& samples,
                                const std::function<std::string(const VQASample&)>& predict) {
  EvalReport r;
  double total = 0.0, yn = 0.0, num = 0.0, other = 0.0, cr = 0.0;
  for (const auto& s : samples) {
    const double score = vqa_accuracy(predict(s), s.annotations);
    total += score;
    switch (s.category) {
      case Category::yesno:
        yn += score;
        ++r.yesno_count;
        break;
      case Category::number:
        num += score;
        ++r.number_count;
        break;
      case Category::other:
        other += score;
        ++r.other_count;
        break;
    }
    const auto kind = s.kind();
    if (kind == QuestionKind::counting || kind == QuestionKind::relational) {
      cr += score;
      ++r.count_relational_count;
    }
  }
  r.count = samples.size();
  auto ratio = [](double sum, std::size_t n) { return n == 0 ? 0.0 : sum / static_cast<double>(n); };
  r.overall = ratio(total, r.count);
  r.yesno = ratio(yn, r.yesno_count);
  r.number = ratio(num, r.number_count);
  r.other = ratio(other, r.other_count);
  r.count_relational = ratio(cr, r.count_relational_count);
  return r;
}

std::uint64_t vocab_fingerprint(const Vocab& vocab) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const std::string& s) {
    for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
    h = (h ^ 0xff) * 0x100000001b3ULL;
  };
  for (const auto& t : vocab.tokens()) feed(t);
  feed("\t");
  for (const auto& a : vocab.answers()) feed(a);
  return h;
}

const TensorRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

Checkpoint make_checkpoint(const ModelParams& params, const AdamState* adam, const TrainConfig& cfg,
                           const Vocab& vocab, std::uint64_t step, const std::string& rng_state) {
  Checkpoint c;
  c.model = params.config;
  c.train = cfg;
  c.vocab_tokens = vocab.token_count();
  c.vocab_answers = vocab.answer_count();
  c.vocab_fingerprint = vocab_fingerprint(vocab);
  c.step = step;
  c.rng_state = rng_state;
  const auto set = params.parameters();
  for (const auto& p : set.entries()) {
    c.tensors.push_back({"param/" + p.name, p.value.shape(), p.value.to_vector()});
  }
  if (adam) {
    c.adam_step = adam->t;
    const auto names = trainable_names(set);
    if (adam->m.size() != names.size()) throw ContractError("Adam state does not match the model");
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto shape = set.find(names[k])->value.shape();
      c.tensors.push_back({"adam.m/" + names[k], shape, adam->m[k]});
      c.tensors.push_back({"adam.v/" + names[k], shape, adam->v[k]});
    }
  }
  return c;
}

ModelParams restore_model(const Checkpoint& ckpt) {
  auto params = ModelParams::create(ckpt.model);
  auto set = params.parameters();
  for (auto& p : set.entries()) {
    const auto* rec = ckpt.find("param/" + p.name);
    if (!rec) throw ParseError("checkpoint has no tensor for parameter '" + p.name + "'");
    if (rec->shape != p.value.shape()) {
      throw ParseError("checkpoint tensor '" + p.name + "' has shape " + shape_string(rec->shape) + ", model expects " +
                       shape_string(p.value.shape()));
    }
    auto dst = p.value.mutable_data();
    std::copy(rec->values.begin(), rec->values.end(), dst.begin());
  }
  return params;
}

AdamState restore_adam(const Checkpoint& ckpt, const ModelParams& params) {
  const auto set = params.parameters();
  AdamState s = AdamState::zeros(set);
  s.t = ckpt.adam_step;
  const auto names = trainable_names(set);
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto* m = ckpt.find("adam.m/" + names[k]);
    const auto* v = ckpt.find("adam.v/" + names[k]);
    if (!m || !v) {
      if (ckpt.adam_step == 0) continue;
      throw ParseError("checkpoint is missing Adam moments for '" + names[k] + "'");
    }
    if (m->values.size() != s.m[k].size() || v->values.size() != s.v[k].size()) {
      throw ParseError("checkpoint Adam moments for '" + names[k] + "' have the wrong size");
    }
    s.m[k] = m->values;
    s.v[k] = v->values;
  }
  return s;
}

namespace {

std::string shape_token(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  return out;
}

Shape parse_shape_token(const std::string& token) {
  if (token == "scalar") return {};
  Shape shape;
  std::istringstream in(token);
  for (std::string part; std::getline(in, part, 'x');) {
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos) {
      throw ParseError("bad tensor shape '" + token + "'");
    }
    shape.push_back(std::stoull(part));
  }
  return shape;
}

void put_le(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_le(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 7; i >= 0; --i) bits = (bits << 8) | bytes[i];
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kMagic << ' ' << Checkpoint::kVersion << '\n';
  for (const auto& [k, v] : model_settings(ckpt.model)) out << "model." << k << '=' << v << '\n';
  for (const auto& [k, v] : train_settings(ckpt.train)) out << "train." << k << '=' << v << '\n';
  out << "vocab.tokens=" << ckpt.vocab_tokens << '\n'
      << "vocab.answers=" << ckpt.vocab_answers << '\n'
      << "vocab.fingerprint=" << ckpt.vocab_fingerprint << '\n'
      << "step=" << ckpt.step << '\n'
      << "adam.t=" << ckpt.adam_step << '\n'
      << "rng=" << ckpt.rng_state << '\n';
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (t.values.size() != shape_numel(t.shape)) throw ContractError("tensor '" + t.name + "' size mismatch");
    out << "tensor " << t.name << ' ' << shape_token(t.shape) << ' ' << offset << ' ' << t.values.size() << '\n';
    offset += t.values.size();
  }
  out << "end\n";
  for (const auto& t : ckpt.tensors)
    for (double v : t.values) put_le(out, v);
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where + ": empty checkpoint");
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) throw ParseError(where + ": not a checkpoint file");
    if (version != Checkpoint::kVersion) {
      throw ParseError(where + ": unsupported checkpoint version " + std::to_string(version));
    }
  }
  Checkpoint c;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset, count;
  };
  std::vector<Entry> dir;
  bool ended = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string at = where + ":" + std::to_string(line_no) + ": ";
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream t(line.substr(7));
      Entry e;
      std::string shape;
      if (!(t >> e.name >> shape >> e.offset >> e.count)) throw ParseError(at + "malformed tensor entry");
      e.shape = parse_shape_token(shape);
      if (shape_numel(e.shape) != e.count) throw ParseError(at + "tensor count does not match its shape");
      for (const auto& d : dir)
        if (d.name == e.name) throw ParseError(at + "duplicate tensor '" + e.name + "'");
      dir.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(at + "expected key=value");
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    try {
      if (key.rfind("model.", 0) == 0) {
        if (!apply_model_setting(c.model, key.substr(6), value)) throw ParseError("unknown key");
      } else if (key.rfind("train.", 0) == 0) {
        if (!apply_train_setting(c.train, key.substr(6), value)) throw ParseError("unknown key");
      } else if (key == "vocab.tokens") {
        c.vocab_tokens = std::stoull(value);
      } else if (key == "vocab.answers") {
        c.vocab_answers = std::stoull(value);
      } else if (key == "vocab.fingerprint") {
        c.vocab_fingerprint = std::stoull(value);
      } else if (key == "step") {
        c.step = std::stoull(value);
      } else if (key == "adam.t") {
        c.adam_step = std::stoull(value);
      } else if (key == "rng") {
        c.rng_state = value;
      } else {
        throw ParseError("unknown key");
      }
    } catch (const std::exception& e) {
      throw ParseError(at + "bad entry '" + key + "': " + e.what());
    }
  }
  if (!ended) throw ParseError(where + ": manifest has no end marker");
  std::size_t total = 0;
  for (const auto& e : dir) {
    if (e.offset != total) throw ParseError(where + ": tensor '" + e.name + "' is not contiguous");
    total += e.count;
  }
  std::vector<unsigned char> bytes(total * 8);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw ParseError(where + ": truncated tensor data");
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError(where + ": trailing bytes after tensor data");
  for (const auto& e : dir) {
    TensorRecord r{e.name, e.shape, std::vector<double>(e.count)};
    for (std::size_t i = 0; i < e.count; ++i) r.values[i] = get_le(bytes.data() + 8 * (e.offset + i));
    c.tensors.push_back(std::move(r));
  }
  return c;
}

EvalReport evaluate(const ModelParams& params, const std::vector<VQASample>& samples, const Vocab& vocab,
                    std::size_t regions, std::size_t region_features) {
  if (params.config.vocab_size != vocab.token_count() || params.config.answers != vocab.answer_count()) {
    throw ConfigError("model was built for " + std::to_string(params.config.vocab_size) + " tokens and " +
                      std::to_string(params.config.answers) + " answers, dataset has " +
                      std::to_string(vocab.token_count()) + " and " + std::to_string(vocab.answer_count()));
  }
  Rng unused(0);
  auto report = evaluate_predictions(samples, [&](const VQASample& s) {
    const auto out = model_forward({sample_regions(s, regions, region_features), s.tokens}, params, Mode::eval, unused);
    return vocab.answer(predict_answer(out.logits));
  });
  report.variant = params.config.variant;
  report.seed = params.config.seed;
  return report;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<VQASample>& samples, const Vocab& vocab,
                    std::size_t regions, std::size_t region_features) {
  if (ckpt.vocab_fingerprint != vocab_fingerprint(vocab)) {
    throw ConfigError("checkpoint vocabulary does not match the dataset vocabulary");
  }
  return evaluate(restore_model(ckpt), samples, vocab, regions, region_features);
}

ModelConfig model_config_for(const ModelConfig& base, const LoadedDataset& data, const TrainConfig& cfg) {
  ModelConfig m = base;
  m.regions = data.regions;
  m.region_features = data.region_features;
  m.vocab_size = data.data.vocab.token_count();
  m.answers = data.data.vocab.answer_count();
  m.variant = cfg.variant;
  m.seed = cfg.seed;
  m.dropout = cfg.dropout;
  return m;
}

namespace {

std::string rng_text(const Rng& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

// Names the first non-finite parameter or activation of a diverged step.
std::string locate_non_finite(const ModelParams& params, const ModelInput& input, Rng rng) {
  for (const auto& p : params.parameters().entries()) {
    if (!all_finite(p.value)) return "parameter '" + p.name + "'";
  }
  if (!all_finite(input.regions)) return "input regions";
  Trace trace;
  model_forward(input, params, Mode::train, rng, &trace);
  for (const auto& [name, t] : trace) {
    if (!all_finite(t)) return "activation '" + name + "'";
  }
  return "loss";
}

std::optional<std::size_t> draw_target(const VQASample& s, const Vocab& vocab, Rng& rng) {
  std::vector<std::size_t> ids;
  for (const auto& a : s.annotations)
    if (auto id = vocab.answer_id(a)) ids.push_back(*id);
  if (ids.empty()) return std::nullopt;
  // Equivalent to redrawing until an in-vocabulary annotation comes up.
  return ids[std::uniform_int_distribution<std::size_t>(0, ids.size() - 1)(rng)];
}

}  // namespace

TrainResult train(const ModelConfig& base, const LoadedDataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  const auto& samples = data.data.train;
  if (samples.empty()) throw ContractError("training split is empty");
  const auto& vocab = data.data.vocab;
  const auto mc = model_config_for(base, data, cfg);
  auto params = ModelParams::create(mc);
  auto set = params.parameters();
  auto leaves = trainable(set);
  auto adam = AdamState::zeros(set);

  std::vector<Tensor> regions;
  regions.reserve(samples.size());
  for (const auto& s : samples) regions.push_back(sample_regions(s, data.regions, data.region_features));

  auto order_rng = make_rng(cfg.seed, kOrderStream);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  TrainResult result;
  double best = -1.0;
  auto maybe_eval = [&](std::uint64_t step, TraceRow& row) {
    if (data.data.val.empty()) return;
    const auto report = evaluate(params, data.data.val, vocab, data.regions, data.region_features);
    row.val_accuracy = report.overall;
    if (hooks.on_eval) hooks.on_eval(step, report);
    if (report.overall > best) {
      best = report.overall;
      result.best = make_checkpoint(params, &adam, cfg, vocab, step, rng_text(order_rng));
      result.best_report = report;
    }
  };

  std::vector<std::vector<double>> grads(leaves.size());
  for (std::uint64_t step = 1; step <= cfg.iterations; ++step) {
    for (std::size_t k = 0; k < leaves.size(); ++k) grads[k].assign(leaves[k].numel(), 0.0);
    double loss_sum = 0.0;
    std::size_t used = 0;
    const auto step_seed = derive_seed(cfg.seed, kStepStream + step);
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const auto idx = order[cursor++];
      auto rng = make_rng(step_seed, b);
      const auto target = draw_target(samples[idx], vocab, rng);
      if (!target) continue;
      const ModelInput input{regions[idx], samples[idx].tokens};
      const Rng before = rng;
      const auto out = model_forward(input, params, Mode::train, rng);
      const auto loss = cross_entropy_loss(out.logits, *target);
      if (!std::isfinite(loss.item())) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step) + ", first non-finite tensor: " +
                              locate_non_finite(params, input, before));
      }
      const auto g = backward(loss);
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (!g.contains(leaves[k])) continue;
        const auto gk = g.of(leaves[k]);
        for (std::size_t i = 0; i < gk.size(); ++i) grads[k][i] += gk[i];
      }
      loss_sum += loss.item();
      ++used;
    }
    TraceRow row{step, used ? loss_sum / static_cast<double>(used) : 0.0, std::nullopt};
    if (used > 0) {
      const double inv = 1.0 / static_cast<double>(used);
      for (std::size_t k = 0; k < leaves.size(); ++k) {
        for (auto& v : grads[k]) {
          v *= inv;
          if (!std::isfinite(v)) {
            throw DivergenceError("non-finite gradient at step " + std::to_string(step) + " for parameter '" +
                                  trainable_names(set)[k] + "'");
          }
        }
      }
      adam_step(set, grads, adam, cfg);
    }
    if (cfg.eval_interval > 0 && step % cfg.eval_interval == 0) maybe_eval(step, row);
    if (hooks.on_step) hooks.on_step(row);
    result.trace.push_back(row);
  }
  if (cfg.eval_interval > 0 && (cfg.iterations == 0 || cfg.iterations % cfg.eval_interval != 0)) {
    TraceRow ignored;
    maybe_eval(cfg.iterations, ignored);
  }
  result.final = make_checkpoint(params, &adam, cfg, vocab, cfg.iterations, rng_text(order_rng));
  return result;
}

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step\tloss\tval_accuracy\n";
  for (const auto& r : trace) {
    out << r.step << '\t' << format_double(r.loss) << '\t' << (r.val_accuracy ? format_double(*r.val_accuracy) : "-")
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace drau
