#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace drau {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

// grad_in[i] points at a zeroed buffer with the extent of input i, or is
// null when input i does not need a gradient.
using BackwardFn =
    std::function<void(std::span<const double> grad_out, std::span<std::vector<double>*> grad_in)>;

struct Node {
  std::uint64_t id = 0;
  const char* op = "leaf";
  Shape shape;
  std::vector<double> value;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};

std::uint64_t next_node_id();

}  // namespace detail

/// Dense row-major tensor of doubles. A Tensor is a cheap handle onto a graph
/// node; copies share the node. Nodes created by ops record their inputs and a
/// backward rule whenever any input requires a gradient, so the graph is
/// built by running the forward computation.
class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  /// Creates an op node. Inputs and the backward rule are only retained when
  /// some input requires a gradient.
  static Tensor make_op(const char* op, Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, detail::BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  std::uint64_t id() const;
  const char* op() const;
  bool requires_grad() const;
  bool is_leaf() const;

  std::span<const double> data() const;
  /// Writable view of a leaf's values (optimizer updates, finite differences).
  std::span<double> mutable_data();
  std::vector<double> to_vector() const { return {data().begin(), data().end()}; }

  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t row, std::size_t col) const;

  /// Copy of the values as a fresh leaf with no history.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

bool all_finite(const Tensor& t);
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace drau
