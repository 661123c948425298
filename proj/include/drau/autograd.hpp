#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "drau/tensor.hpp"

namespace drau {

/// Gradients of a scalar loss with respect to every leaf that requires one.
class Gradients {
 public:
  bool contains(const Tensor& leaf) const;
  /// Throws LookupError when the leaf received no gradient.
  std::span<const double> of(const Tensor& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& loss);
  std::unordered_map<const detail::Node*, std::vector<double>> grads_;
};

/// Reverse-mode sweep from a scalar loss. Nodes are visited in exact reverse
/// creation order, which is a reverse topological order because every op node
/// is created after its inputs. Fan-out contributions accumulate additively.
Gradients backward(const Tensor& loss);

struct OpRecord {
  std::uint64_t output = 0;
  const char* op = "";
  std::vector<std::uint64_t> inputs;
};

/// Op records reachable from `root`, in topological (creation) order.
std::vector<OpRecord> graph_records(const Tensor& root);

/// Order in which backward() would visit the nodes reachable from `root`.
std::vector<std::uint64_t> backward_order(const Tensor& root);

namespace detail {
struct KinkState;
}

/// corner: slope changes at 0 (PReLU). cusp: unbounded curvature at 0
/// (signed square root).
enum class Kink { corner, cusp };

// Ops with a non-differentiable point at 0 report their inputs while a
// KinkMonitor is alive. A gradient-check probe is kink-adjacent when it flips
// the sign of any reported input, or moves a cusp input by more than
// kCuspMargin of its distance from 0; such coordinates are excluded.
class KinkMonitor {
 public:
  static constexpr double kCuspMargin = 0.02;

  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  /// The next forward pass becomes the reference.
  void capture_reference();
  /// The next forward pass is compared with the reference.
  void begin_probe();
  bool probe_adjacent() const;

  static void record(std::span<const double> values, Kink kind);

 private:
  std::unique_ptr<detail::KinkState> saved_;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  /// Index of the worst coordinate within the flattened parameter list.
  std::size_t worst_index = 0;
};

inline constexpr double kDefaultGradCheckEps = 1e-5;

/// Finite-difference formula: (f(x+h) - f(x-h)) / 2h, or the five-point
/// (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h with O(h^4) truncation.
enum class Stencil { central, central_five_point };

/// max over coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
/// with numeric derivatives from central differences. `x` must be a leaf that
/// requires a gradient; its values are restored afterwards.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double eps = kDefaultGradCheckEps);

/// Same measure over several leaves at once. `f` rebuilds the graph from the
/// current leaf values on every call.
GradCheckResult grad_check_params(const std::function<Tensor()>& f, std::span<Tensor> leaves,
                                  double eps = kDefaultGradCheckEps, Stencil stencil = Stencil::central);

}  // namespace drau
