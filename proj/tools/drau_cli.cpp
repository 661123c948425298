// drau: dataset generation, training, evaluation, ablation, attention export
// and gradient checking from the command line.
//
// Settings are resolved as: command-line flags > --config file > DRAU_SEED
// environment variable > built-in defaults.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drau/ablation.hpp"
#include "drau/dataset.hpp"
#include "drau/errors.hpp"
#include "drau/export.hpp"
#include "drau/gradcheck.hpp"
#include "drau/settings.hpp"
#include "drau/train.hpp"

#ifndef DRAU_VERSION
#define DRAU_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using namespace drau;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Flag values are collected as strings and applied through the same setters
// as config-file entries, so both paths share validation.
struct Overlay {
  std::string config_path;
  std::map<std::string, std::string> flags;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("DRAU_SEED");
  if (!v || !*v) return std::nullopt;
  char* end = nullptr;
  const auto seed = std::strtoull(v, &end, 10);
  if (*end != '\0') throw ConfigError(std::string("DRAU_SEED must be an integer, got '") + v + "'");
  return seed;
}

using Applier = std::function<bool(const std::string&, const std::string&)>;

// Env seed first, then the config file, then explicit flags.
void resolve(const Overlay& o, const Applier& apply) {
  if (auto s = env_seed()) apply("seed", std::to_string(*s));
  if (!o.config_path.empty()) {
    for (const auto& [k, v] : read_key_values(o.config_path)) {
      if (!apply(k, v)) throw ConfigError("unknown config key '" + k + "' in " + o.config_path);
    }
  }
  for (const auto& [k, v] : o.flags) {
    if (!apply(k, v)) throw ConfigError("unknown setting '" + k + "'");
  }
}

void echo(const std::string& command, std::uint64_t seed, const KeyValues& settings) {
  std::cout << "drau " << DRAU_VERSION << " " << command << "\n";
  std::cout << "seed=" << seed << "\n";
  for (const auto& [k, v] : settings) std::cout << "config." << k << "=" << v << "\n";
  std::cout.flush();
}

// Registers a string-valued flag that lands in the overlay under `key`.
void flag(CLI::App* app, Overlay& o, const std::string& name, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>(name, [&o, key](const std::string& v) { o.flags[key] = v; }, help);
}

void print_report(const EvalReport& r) {
  std::printf("variant\t%s\n", variant_name(r.variant).c_str());
  std::printf("seed\t%llu\n", static_cast<unsigned long long>(r.seed));
  std::printf("samples\t%zu\n", r.count);
  std::printf("All\t%.6f\n", r.overall);
  std::printf("Y/N\t%.6f\t(%zu)\n", r.yesno, r.yesno_count);
  std::printf("Num\t%.6f\t(%zu)\n", r.number, r.number_count);
  std::printf("Other\t%.6f\t(%zu)\n", r.other, r.other_count);
  std::printf("Count+Rel\t%.6f\t(%zu)\n", r.count_relational, r.count_relational_count);
}

void print_split_counts(const char* name, const std::vector<VQASample>& samples) {
  std::size_t yn = 0, num = 0, other = 0;
  for (const auto& s : samples) {
    switch (s.category) {
      case Category::yesno: ++yn; break;
      case Category::number: ++num; break;
      case Category::other: ++other; break;
    }
  }
  std::printf("%s\t%zu samples\tyesno %zu\tnumber %zu\tother %zu\n", name, samples.size(), yn, num, other);
}

const std::vector<VQASample>& pick_split(const LoadedDataset& d, const std::string& split) {
  if (split == "train") return d.data.train;
  if (split == "val") return d.data.val;
  throw ConfigError("split must be train or val, got '" + split + "'");
}

// Checkpoint commands take their seed from the checkpoint; a seed setting is
// accepted and has no effect.
bool seed_only(const std::string& k, const std::string&) { return k == "seed"; }

// --- subcommands ------------------------------------------------------------

int gen_data(const Overlay& o, const fs::path& out) {
  DatasetConfig cfg;
  resolve(o, [&](const std::string& k, const std::string& v) { return apply_dataset_setting(cfg, k, v); });
  echo("gen-data", cfg.seed, dataset_settings(cfg));
  const auto data = build_dataset(cfg);
  save_dataset(data, cfg, out);
  print_split_counts("train", data.train);
  print_split_counts("val", data.val);
  std::printf("wrote %s\n", out.string().c_str());
  return 0;
}

struct TrainSettings {
  ModelConfig model;
  TrainConfig train;
};

Applier train_applier(TrainSettings& s) {
  return [&s](const std::string& k, const std::string& v) {
    // seed, variant and dropout live on TrainConfig and flow into the model.
    return apply_train_setting(s.train, k, v) || apply_model_setting(s.model, k, v);
  };
}

KeyValues train_echo(const TrainSettings& s) {
  auto kv = train_settings(s.train);
  for (const auto& [k, v] : model_settings(s.model)) {
    if (k != "seed" && k != "variant" && k != "dropout") kv.emplace_back("model." + k, v);
  }
  return kv;
}

int cmd_train(const Overlay& o, const fs::path& data_dir, const fs::path& out) {
  TrainSettings s;
  resolve(o, train_applier(s));
  echo("train", s.train.seed, train_echo(s));
  const auto data = load_dataset(data_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  TrainHooks hooks;
  hooks.on_eval = [](std::uint64_t step, const EvalReport& r) {
    std::printf("eval step %llu\tAll %.4f\tY/N %.4f\tNum %.4f\tOther %.4f\n", static_cast<unsigned long long>(step),
                r.overall, r.yesno, r.number, r.other);
    std::fflush(stdout);
  };
  const auto result = train(s.model, data, s.train, hooks);
  save_checkpoint(result.final, out / "final.ckpt");
  if (result.best) save_checkpoint(*result.best, out / "best.ckpt");
  write_trace(result.trace, out / "trace.tsv");
  std::printf("wrote %s\n", (out / "final.ckpt").string().c_str());
  return 0;
}

int cmd_eval(const Overlay& o, const fs::path& data_dir, const fs::path& ckpt_path, const std::string& split) {
  resolve(o, seed_only);
  const auto ckpt = load_checkpoint(ckpt_path);
  echo("eval", ckpt.train.seed,
       {{"checkpoint", ckpt_path.string()}, {"split", split}, {"variant", variant_name(ckpt.model.variant)}});
  const auto data = load_dataset(data_dir);
  print_report(evaluate(ckpt, pick_split(data, split), data.data.vocab, data.regions, data.region_features));
  return 0;
}

int cmd_ablate(const Overlay& o, const fs::path& data_dir, const fs::path& out, std::size_t seeds,
               const std::string& variants, std::size_t jobs) {
  TrainSettings s;
  resolve(o, train_applier(s));
  if (seeds == 0) throw ConfigError("--seeds must be at least 1");
  AblationConfig cfg;
  cfg.model = s.model;
  cfg.train = s.train;
  cfg.jobs = jobs;
  cfg.seeds.clear();
  for (std::size_t i = 0; i < seeds; ++i) cfg.seeds.push_back(s.train.seed + i);
  if (!variants.empty()) {
    cfg.variants.clear();
    std::istringstream in(variants);
    for (std::string name; std::getline(in, name, ',');) cfg.variants.push_back(parse_variant(name));
  }
  auto kv = train_echo(s);
  kv.emplace_back("seeds", std::to_string(seeds));
  kv.emplace_back("jobs", std::to_string(jobs));
  echo("ablate", s.train.seed, kv);
  const auto data = load_dataset(data_dir);
  const auto table = run_ablation(cfg, data);
  const auto tsv = table.to_tsv();
  std::cout << tsv;
  std::ofstream f(out, std::ios::trunc);
  if (!f || !(f << tsv)) throw IoError("cannot write " + out.string());
  std::size_t failures = 0;
  for (const auto& r : table.runs) failures += r.ok ? 0 : 1;
  return failures == table.runs.size() ? kExitFailure : 0;
}

int cmd_attn(const Overlay& o, const fs::path& data_dir, const fs::path& ckpt_path, const std::string& split,
             std::uint64_t sample_id, const fs::path& out) {
  resolve(o, seed_only);
  const auto ckpt = load_checkpoint(ckpt_path);
  echo("attn", ckpt.train.seed,
       {{"checkpoint", ckpt_path.string()}, {"split", split}, {"sample", std::to_string(sample_id)}});
  const auto data = load_dataset(data_dir);
  const auto& samples = pick_split(data, split);
  const VQASample* sample = nullptr;
  for (const auto& s : samples)
    if (s.id == sample_id) sample = &s;
  if (!sample) throw LookupError("no sample with id " + std::to_string(sample_id) + " in split " + split);
  const auto ex = export_attention(ckpt, *sample, data.data.vocab, data.regions, data.region_features, out);
  std::printf("question\t%s\nanswer\t%s\nscore\t%.6f\n", sample->question.c_str(), ex.answer.c_str(), ex.score);
  for (const auto& f : ex.files) std::printf("wrote %s\n", f.string().c_str());
  return 0;
}

int cmd_gradcheck(const Overlay& o) {
  GradCheckSuiteConfig cfg;
  resolve(o, [&](const std::string& k, const std::string& v) {
    if (k == "seed") cfg.base_seed = std::stoull(v);
    else if (k == "seeds") cfg.seeds = std::stoull(v);
    else if (k == "tolerance") cfg.tolerance = std::stod(v);
    else return false;
    return true;
  });
  echo("gradcheck", cfg.base_seed,
       {{"seeds", std::to_string(cfg.seeds)}, {"tolerance", format_double(cfg.tolerance)},
        {"composite_step", format_double(cfg.composite_step)}});
  const auto cases = run_gradcheck_suite(cfg);
  std::map<std::string, GradCheckCase> worst;
  std::size_t failed = 0;
  for (const auto& c : cases) {
    auto [it, fresh] = worst.emplace(c.name, c);
    if (!fresh && c.max_rel_error > it->second.max_rel_error) it->second = c;
    if (!c.passed) {
      ++failed;
      std::printf("FAIL\t%s\tseed %llu\t%.3e\n", c.name.c_str(), static_cast<unsigned long long>(c.seed),
                  c.max_rel_error);
    }
  }
  std::printf("check\tmax_rel_error\tworst_seed\n");
  for (const auto& names = gradcheck_case_names(cfg); const auto& n : names) {
    const auto& c = worst.at(n);
    std::printf("%s\t%.3e\t%llu\n", n.c_str(), c.max_rel_error, static_cast<unsigned long long>(c.seed));
  }
  std::printf("%zu of %zu cases failed\n", failed, cases.size());
  return failed ? kExitFailure : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DRAU desk-scale VQA toolkit"};
  app.set_version_flag("--version", DRAU_VERSION);
  app.require_subcommand(1);

  Overlay overlay;
  app.add_option("--config", overlay.config_path, "Flat key=value settings file")->check(CLI::ExistingFile);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic grid-world dataset");
  std::string gen_out;
  gen->add_option("--out", gen_out, "Output directory")->required();
  flag(gen, overlay, "--scenes", "scenes", "Number of scenes");
  flag(gen, overlay, "--seed", "seed", "Dataset seed");
  flag(gen, overlay, "--grid", "grid", "Grid side");
  flag(gen, overlay, "--noise", "noise", "Feature noise sigma");
  flag(gen, overlay, "--corruption", "corruption", "Annotation corruption rate");
  flag(gen, overlay, "--questions-per-scene", "questions_per_scene", "Questions per scene");
  flag(gen, overlay, "--region-features", "region_features", "Region feature width");

  // train / ablate share the recipe flags
  auto recipe = [&](CLI::App* sub) {
    flag(sub, overlay, "--variant", "variant", "simple-conv|simple-rvau|dca|dca-rvau|dca-rtau|drau");
    flag(sub, overlay, "--lr", "lr", "Adam learning rate");
    flag(sub, overlay, "--batch", "batch", "Batch size");
    flag(sub, overlay, "--dropout", "dropout", "Dropout probability");
    flag(sub, overlay, "--iters", "iters", "Training iterations");
    flag(sub, overlay, "--seed", "seed", "Model and training seed");
    flag(sub, overlay, "--eval-interval", "eval_interval", "Validation interval (0 disables)");
  };
  std::string data_dir, out_path, ckpt_path, split = "val", variants;
  std::size_t seeds = 3, jobs = 1;
  std::uint64_t sample_id = 0;

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", data_dir, "Dataset directory")->required();
  tr->add_option("--out", out_path, "Output directory for checkpoints and trace")->required();
  recipe(tr);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  ev->add_option("--split", split, "train or val");

  auto* ab = app.add_subcommand("ablate", "Train every variant over several seeds");
  ab->add_option("--data", data_dir, "Dataset directory")->required();
  ab->add_option("--out", out_path, "TSV table path")->required();
  ab->add_option("--seeds", seeds, "Number of seeds, counting up from --seed");
  ab->add_option("--variants", variants, "Comma-separated variant names (default: all)");
  ab->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
  recipe(ab);

  auto* at = app.add_subcommand("attn", "Export attention maps for one sample");
  at->add_option("--data", data_dir, "Dataset directory")->required();
  at->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  at->add_option("--sample", sample_id, "Sample id")->required();
  at->add_option("--split", split, "train or val");
  at->add_option("--out", out_path, "Output directory")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  flag(gc, overlay, "--seeds", "seeds", "Seeds per check");
  flag(gc, overlay, "--seed", "seed", "First seed");
  flag(gc, overlay, "--tolerance", "tolerance", "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return gen_data(overlay, gen_out);
    if (tr->parsed()) return cmd_train(overlay, data_dir, out_path);
    if (ev->parsed()) return cmd_eval(overlay, data_dir, ckpt_path, split);
    if (ab->parsed()) return cmd_ablate(overlay, data_dir, out_path, seeds, variants, jobs);
    if (at->parsed()) return cmd_attn(overlay, data_dir, ckpt_path, split, sample_id, out_path);
    if (gc->parsed()) return cmd_gradcheck(overlay);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
