#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "drau/dataset.hpp"
#include "drau/model.hpp"
#include "drau/train.hpp"

namespace drau {

struct AblationConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<Variant> variants = all_variants();
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t jobs = 1;
};

struct AblationRun {
  Variant variant = Variant::drau;
  std::uint64_t seed = 0;
  std::size_t parameters = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
};

/// Mean and standard deviation (n - 1 denominator; 0 for a single value).
struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

Stat summarize(const std::vector<double>& values);
double median(std::vector<double> values);

struct AblationRow {
  Variant variant = Variant::drau;
  std::size_t parameters = 0;
  Stat all, yesno, number, other, count_relational;
  std::size_t failures = 0;
};

/// Recurrent-vs-convolutional visual attention comparison on the counting and
/// relational questions: medians over seeds.
struct DirectionalGap {
  Variant recurrent, convolutional;
  double recurrent_median = 0.0;
  double convolutional_median = 0.0;
  bool recurrent_ahead = false;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationRun> runs;
  /// Largest relative parameter gap within the Simple Net pair and within the
  /// dual-attention grid.
  double max_parameter_gap = 0.0;
  std::vector<DirectionalGap> gaps;

  bool counts_matched() const { return max_parameter_gap <= 0.02; }
  std::string to_tsv() const;
};

/// Trains every (variant, seed) pair on the training split and evaluates on
/// the validation split. Failed runs are recorded and the rest proceed. Runs
/// execute on up to `jobs` threads; the table does not depend on `jobs`.
AblationTable run_ablation(const AblationConfig& cfg, const LoadedDataset& data);

/// Relative spread (max - min) / max of trainable parameter counts.
double parameter_gap(const std::vector<std::size_t>& counts);

}  // namespace drau
