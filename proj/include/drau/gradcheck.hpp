#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace drau {

struct GradCheckCase {
  std::string name;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool passed = false;
};

struct GradCheckSuiteConfig {
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  double tolerance = 1e-4;
  /// Step of the five-point stencil used for multi-layer graphs; single ops
  /// use the two-point stencil with the default step.
  double composite_step = 1e-2;
  bool include_ops = true;
  bool include_models = true;
};

/// Finite-difference checks of every differentiable op and of the full model
/// graphs at toy sizes (4 regions, 3 words, hidden 8, sketch 16, 2 glimpses),
/// one case per (check, seed).
std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteConfig& cfg = {});

/// Names of the checks the suite runs for each seed.
std::vector<std::string> gradcheck_case_names(const GradCheckSuiteConfig& cfg = {});

}  // namespace drau
