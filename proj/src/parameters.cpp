#include "drau/parameters.hpp"

#include "drau/errors.hpp"

namespace drau {

void ParameterSet::add(std::string name, const Tensor& value, bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  if (!value.is_leaf()) throw ContractError("parameter '" + name + "' must be a leaf tensor");
  if (trainable && !value.requires_grad()) throw ContractError("trainable parameter '" + name + "' needs gradients");
  entries_.push_back({std::move(name), value, trainable});
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

std::size_t ParameterSet::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : entries_)
    if (p.trainable) n += p.value.numel();
  return n;
}

}  // namespace drau
