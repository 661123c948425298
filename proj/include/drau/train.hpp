#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drau/dataset.hpp"
#include "drau/model.hpp"
#include "drau/parameters.hpp"

namespace drau {

struct TrainConfig {
  double lr = 7e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch = 32;
  std::size_t iterations = 5000;
  double dropout = 0.3;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 500;  // 0 disables periodic evaluation
  Variant variant = Variant::drau;

  void validate() const;
};

/// First and second moment estimates for every trainable tensor, in the order
/// of ModelParams::parameters().
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  static AdamState zeros(const ParameterSet& params);
};

/// One bias-corrected Adam update of the trainable entries of `params`.
/// `grads` holds one buffer per trainable entry.
void adam_step(ParameterSet& params, std::span<const std::vector<double>> grads, AdamState& state,
               const TrainConfig& cfg);

struct EvalReport {
  double overall = 0.0;
  double yesno = 0.0;
  double number = 0.0;
  double other = 0.0;
  std::size_t count = 0;
  std::size_t yesno_count = 0;
  std::size_t number_count = 0;
  std::size_t other_count = 0;
  /// Accuracy on counting and relational questions together.
  double count_relational = 0.0;
  std::size_t count_relational_count = 0;
  Variant variant = Variant::drau;
  std::uint64_t seed = 0;
};

/// Scores per-sample predictions with the consensus metric.
EvalReport evaluate_predictions(const std::vector<VQASample>& samples,
                                const std::function<std::string(const VQASample&)>& predict);

/// One named tensor of a checkpoint.
struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelConfig model;
  TrainConfig train;
  std::size_t vocab_tokens = 0;
  std::size_t vocab_answers = 0;
  std::uint64_t vocab_fingerprint = 0;
  std::uint64_t step = 0;
  std::string rng_state;
  std::uint64_t adam_step = 0;
  /// Model tensors as "param/<name>", Adam moments as "adam.m/<name>" and
  /// "adam.v/<name>".
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
};

std::uint64_t vocab_fingerprint(const Vocab& vocab);

/// Copies the current values into a checkpoint.
Checkpoint make_checkpoint(const ModelParams& params, const AdamState* adam, const TrainConfig& cfg,
                           const Vocab& vocab, std::uint64_t step, const std::string& rng_state);
/// Rebuilds the model and overwrites every tensor with the stored values.
ModelParams restore_model(const Checkpoint& ckpt);
AdamState restore_adam(const Checkpoint& ckpt, const ModelParams& params);

/// Text manifest terminated by "end", followed by raw little-endian float64 data.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Eval-mode accuracy of a model on samples shaped [regions x region_features].
EvalReport evaluate(const ModelParams& params, const std::vector<VQASample>& samples, const Vocab& vocab,
                    std::size_t regions, std::size_t region_features);
/// Throws ConfigError when the checkpoint was trained with another vocabulary.
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<VQASample>& samples, const Vocab& vocab,
                    std::size_t regions, std::size_t region_features);

struct TraceRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  std::optional<double> val_accuracy;
};

struct TrainResult {
  Checkpoint final;
  std::optional<Checkpoint> best;
  std::optional<EvalReport> best_report;
  std::vector<TraceRow> trace;
};

struct TrainHooks {
  std::function<void(const TraceRow&)> on_step;
  std::function<void(std::uint64_t, const EvalReport&)> on_eval;
};

/// Model configuration for a dataset: vocabulary, answer and region sizes
/// taken from the data, variant, seed and dropout from `cfg`.
ModelConfig model_config_for(const ModelConfig& base, const LoadedDataset& data, const TrainConfig& cfg);

/// Mini-batch Adam on the training split. Each visit of a sample draws its
/// target uniformly from its ten annotations. Throws DivergenceError naming the
/// first non-finite tensor when the loss stops being finite.
TrainResult train(const ModelConfig& base, const LoadedDataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

void write_trace(const std::vector<TraceRow>& trace, const std::filesystem::path& path);

}  // namespace drau
