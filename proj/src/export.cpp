#include "drau/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "drau/errors.hpp"
#include "drau/metrics.hpp"
#include "drau/settings.hpp"

namespace drau {

GrayImage attention_image(std::span<const double> weights, std::size_t side) {
  if (side == 0 || weights.size() != side * side) {
    throw DimensionError("attention_image: " + std::to_string(weights.size()) + " weights do not fill a " +
                         std::to_string(side) + "x" + std::to_string(side) + " grid");
  }
  GrayImage img;
  img.width = img.height = side;
  img.max_weight = *std::max_element(weights.begin(), weights.end());
  img.pixels.resize(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double scaled = img.max_weight > 0.0 ? weights[i] / img.max_weight : 0.0;
    img.pixels[i] = static_cast<int>(std::lround(std::clamp(scaled, 0.0, 1.0) * 255.0));
  }
  return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P2\n# max_weight " << format_double(image.max_weight) << '\n'
      << image.width << ' ' << image.height << "\n255\n";
  for (std::size_t r = 0; r < image.height; ++r) {
    for (std::size_t c = 0; c < image.width; ++c) {
      if (c) out << ' ';
      out << image.pixels[r * image.width + c];
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  GrayImage img;
  std::string magic;
  in >> magic;
  if (magic != "P2") throw ParseError(path.string() + ": not a plain graymap");
  // Header fields may be separated by comment lines.
  std::vector<long> header;
  while (header.size() < 3 && in) {
    in >> std::ws;
    if (in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
      std::istringstream c(comment.substr(1));
      std::string key;
      double value = 0.0;
      if (c >> key >> value && key == "max_weight") img.max_weight = value;
      continue;
    }
    long v = 0;
    if (!(in >> v)) break;
    header.push_back(v);
  }
  if (header.size() != 3 || header[0] <= 0 || header[1] <= 0 || header[2] != 255) {
    throw ParseError(path.string() + ": bad graymap header");
  }
  img.width = static_cast<std::size_t>(header[0]);
  img.height = static_cast<std::size_t>(header[1]);
  img.pixels.resize(img.width * img.height);
  for (auto& p : img.pixels) {
    if (!(in >> p) || p < 0 || p > 255) throw ParseError(path.string() + ": bad pixel value");
  }
  return img;
}

std::vector<double> image_weights(const GrayImage& image) {
  std::vector<double> out(image.pixels.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.pixels[i] / 255.0 * image.max_weight;
  return out;
}

AttentionExport export_attention(const Checkpoint& ckpt, const VQASample& sample, const Vocab& vocab,
                                 std::size_t regions, std::size_t region_features,
                                 const std::filesystem::path& dir) {
  if (ckpt.vocab_fingerprint != vocab_fingerprint(vocab)) {
    throw ConfigError("checkpoint vocabulary does not match the dataset vocabulary");
  }
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(regions))));
  if (side * side != regions) throw DimensionError("region count " + std::to_string(regions) + " is not a square");
  const auto params = restore_model(ckpt);
  Rng unused(0);
  const auto out = model_forward({sample_regions(sample, regions, region_features), sample.tokens}, params,
                                 Mode::eval, unused);

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  AttentionExport result;
  if (out.visual) {
    for (std::size_t g = 0; g < out.visual->glimpses(); ++g) {
      const auto path = dir / ("visual_glimpse" + std::to_string(g) + ".pgm");
      const auto row = out.visual->row(g);
      write_pgm(attention_image(row, side), path);
      result.files.push_back(path);
    }
  }
  if (out.textual) {
    for (std::size_t g = 0; g < out.textual->glimpses(); ++g) {
      const auto path = dir / ("textual_glimpse" + std::to_string(g) + ".tsv");
      std::ofstream t(path, std::ios::trunc);
      if (!t) throw IoError("cannot open " + path.string() + " for writing");
      const auto row = out.textual->row(g);
      for (std::size_t n = 0; n < row.size(); ++n) {
        t << vocab.token(sample.tokens[n]) << '\t' << format_double(row[n]) << '\n';
      }
      result.files.push_back(path);
    }
  }
  result.answer = vocab.answer(predict_answer(out.logits));
  result.score = vqa_accuracy(result.answer, sample.annotations);
  const auto answer_path = dir / "answer.txt";
  std::ofstream a(answer_path, std::ios::trunc);
  if (!a) throw IoError("cannot open " + answer_path.string() + " for writing");
  a << "question\t" << sample.question << '\n'
    << "answer\t" << result.answer << '\n'
    << "score\t" << format_double(result.score) << '\n';
  result.files.push_back(answer_path);
  return result;
}

}  // namespace drau
