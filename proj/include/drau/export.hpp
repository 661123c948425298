#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "drau/attention.hpp"
#include "drau/dataset.hpp"
#include "drau/train.hpp"

namespace drau {

/// Plain-text portable graymap with the weight scale kept in a comment.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> pixels;  // row-major, 0..255
  double max_weight = 0.0;
};

/// Row of weights laid out as a side x side grid, scaled so the largest weight
/// maps to 255.
GrayImage attention_image(std::span<const double> weights, std::size_t side);
void write_pgm(const GrayImage& image, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
/// Weights recovered from pixels: pixel / 255 * max_weight.
std::vector<double> image_weights(const GrayImage& image);

struct AttentionExport {
  std::vector<std::filesystem::path> files;
  std::string answer;
  double score = 0.0;
};

/// Writes visual_glimpse<g>.pgm per visual glimpse, textual_glimpse<g>.tsv
/// (token<TAB>weight) per textual glimpse, and answer.txt with the predicted
/// answer and its consensus score.
AttentionExport export_attention(const Checkpoint& ckpt, const VQASample& sample, const Vocab& vocab,
                                 std::size_t regions, std::size_t region_features,
                                 const std::filesystem::path& dir);

}  // namespace drau
