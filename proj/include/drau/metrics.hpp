#pragma once

#include <span>
#include <string>

namespace drau {

inline constexpr std::size_t kAnnotationsPerQuestion = 10;

/// Human-consensus accuracy: min(#annotations equal to `answer` / 3, 1).
/// Requires exactly ten annotations.
double vqa_accuracy(const std::string& answer, std::span<const std::string> annotations);

}  // namespace drau
