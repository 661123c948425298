#include "drau/autograd.hpp"

#include <memory>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "drau/errors.hpp"

namespace drau {

namespace {

std::vector<detail::Node*> reachable_sorted(const Tensor& root) {
  std::vector<detail::Node*> nodes;
  std::unordered_set<const detail::Node*> seen;
  std::vector<detail::Node*> stack{root.node().get()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    nodes.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](auto* a, auto* b) { return a->id > b->id; });
  return nodes;
}

}  // namespace

namespace detail {

struct KinkState {
  bool active = false;
  bool probing = false;
  bool adjacent = false;
  std::size_t cursor = 0;
  std::vector<double> reference;
};

}  // namespace detail

namespace {

using detail::KinkState;

int sign_class(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

thread_local KinkState kink_state;

}  // namespace

bool Gradients::contains(const Tensor& leaf) const { return grads_.count(leaf.node().get()) > 0; }

std::span<const double> Gradients::of(const Tensor& leaf) const {
  auto it = grads_.find(leaf.node().get());
  if (it == grads_.end()) throw LookupError("no gradient recorded for tensor " + std::to_string(leaf.id()));
  return it->second;
}

Gradients backward(const Tensor& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  Gradients out;
  if (!loss.requires_grad()) return out;

  const auto order = reachable_sorted(loss);
  std::unordered_map<const detail::Node*, std::vector<double>> buffers;
  buffers.reserve(order.size());
  buffers[order.front()] = {1.0};

  std::vector<std::vector<double>*> grad_in;
  for (auto* node : order) {
    auto it = buffers.find(node);
    if (it == buffers.end()) continue;  // not on a path to the loss
    if (node->inputs.empty()) {
      out.grads_[node] = std::move(it->second);
      continue;
    }
    grad_in.clear();
    for (const auto& in : node->inputs) {
      if (!in->requires_grad) {
        grad_in.push_back(nullptr);
        continue;
      }
      auto& buf = buffers[in.get()];
      if (buf.empty()) buf.assign(in->value.size(), 0.0);
      grad_in.push_back(&buf);
    }
    // Lookup again: inserting inputs may have rehashed the map.
    auto& gout = buffers[node];
    node->backward(gout, grad_in);
    buffers.erase(node);
  }
  return out;
}

std::vector<OpRecord> graph_records(const Tensor& root) {
  auto nodes = reachable_sorted(root);
  std::reverse(nodes.begin(), nodes.end());
  std::vector<OpRecord> records;
  records.reserve(nodes.size());
  for (auto* n : nodes) {
    OpRecord r{n->id, n->op, {}};
    for (const auto& in : n->inputs) r.inputs.push_back(in->id);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<std::uint64_t> backward_order(const Tensor& root) {
  std::vector<std::uint64_t> ids;
  for (auto* n : reachable_sorted(root)) ids.push_back(n->id);
  return ids;
}

KinkMonitor::KinkMonitor() : saved_(std::make_unique<KinkState>(std::move(kink_state))) {
  kink_state = KinkState{};
  kink_state.active = true;
}

KinkMonitor::~KinkMonitor() { kink_state = std::move(*saved_); }

void KinkMonitor::capture_reference() {
  kink_state.probing = false;
  kink_state.reference.clear();
}

void KinkMonitor::begin_probe() {
  kink_state.probing = true;
  kink_state.adjacent = false;
  kink_state.cursor = 0;
}

bool KinkMonitor::probe_adjacent() const {
  return kink_state.adjacent || kink_state.cursor != kink_state.reference.size();
}

void KinkMonitor::record(std::span<const double> values, Kink kind) {
  auto& st = kink_state;
  if (!st.active) return;
  if (!st.probing) {
    st.reference.insert(st.reference.end(), values.begin(), values.end());
    return;
  }
  for (double v : values) {
    if (st.cursor >= st.reference.size()) {
      st.adjacent = true;
      return;
    }
    const double r = st.reference[st.cursor++];
    if (sign_class(v) != sign_class(r)) st.adjacent = true;
    if (kind == Kink::cusp && std::abs(v - r) > kCuspMargin * std::abs(r)) st.adjacent = true;
  }
}

namespace {

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double eval_scalar(const std::function<Tensor()>& f) {
  const auto y = f();
  if (y.numel() != 1) throw ContractError("gradient check needs a scalar function, got " + shape_string(y.shape()));
  return y.item();
}

}  // namespace

GradCheckResult grad_check_params(const std::function<Tensor()>& f, std::span<Tensor> leaves, double eps,
                                  Stencil stencil) {
  if (!(eps > 0.0)) throw ContractError("gradient check step must be positive");
  for (const auto& leaf : leaves) {
    if (!leaf.is_leaf() || !leaf.requires_grad()) {
      throw ContractError("gradient check needs leaves that require gradients");
    }
  }
  KinkMonitor monitor;
  monitor.capture_reference();
  const auto y = f();
  if (y.numel() != 1) throw ContractError("gradient check needs a scalar function, got " + shape_string(y.shape()));
  const auto grads = backward(y);

  GradCheckResult result;
  std::size_t flat = 0;
  for (auto& leaf : leaves) {
    auto values = leaf.mutable_data();
    const auto analytic = grads.contains(leaf) ? grads.of(leaf) : std::span<const double>{};
    for (std::size_t i = 0; i < values.size(); ++i, ++flat) {
      const double original = values[i];
      bool crossed = false;
      auto at = [&](double offset) {
        values[i] = original + offset;
        monitor.begin_probe();
        const double v = eval_scalar(f);
        crossed = crossed || monitor.probe_adjacent();
        return v;
      };
      double numeric = 0.0;
      if (stencil == Stencil::central) {
        numeric = (at(eps) - at(-eps)) / (2.0 * eps);
      } else {
        const double near = at(eps) - at(-eps);
        const double far = at(2.0 * eps) - at(-2.0 * eps);
        numeric = (8.0 * near - far) / (12.0 * eps);
      }
      values[i] = original;
      if (crossed) {
        ++result.skipped_kinks;
        continue;
      }
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = rel_error(a, numeric);
      ++result.checked;
      if (err > result.max_rel_error || !std::isfinite(err)) {
        result.max_rel_error = std::isfinite(err) ? err : INFINITY;
        result.worst_index = flat;
      }
    }
  }
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  std::vector<Tensor> leaves{x};
  return grad_check_params([&] { return f(x); }, leaves, eps).max_rel_error;
}

}  // namespace drau
