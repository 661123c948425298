#pragma once

#include <string>
#include <vector>

#include "drau/tensor.hpp"

namespace drau {

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Ordered, uniquely named collection of the leaf tensors of a model. The
/// order is the registration order and fixes the layout of optimizer state
/// and checkpoints.
class ParameterSet {
 public:
  void add(std::string name, const Tensor& value, bool trainable = true);

  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& entries() { return entries_; }
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  /// Number of scalar values across trainable entries.
  std::size_t trainable_count() const;

 private:
  std::vector<Parameter> entries_;
};

}  // namespace drau
