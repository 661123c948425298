#include "drau/metrics.hpp"

#include <algorithm>

#include "drau/errors.hpp"

namespace drau {

double vqa_accuracy(const std::string& answer, std::span<const std::string> annotations) {
  if (annotations.size() != kAnnotationsPerQuestion) {
    throw ContractError("vqa_accuracy needs exactly 10 annotations, got " + std::to_string(annotations.size()));
  }
  const auto matches = std::count(annotations.begin(), annotations.end(), answer);
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

}  // namespace drau
