#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drau/random.hpp"
#include "drau/tensor.hpp"

namespace drau {

enum class ObjectShape { circle, square, triangle };
enum class Color { red, green, blue, yellow };

inline constexpr std::array<ObjectShape, 3> kShapes{ObjectShape::circle, ObjectShape::square, ObjectShape::triangle};
inline constexpr std::array<Color, 4> kColors{Color::red, Color::green, Color::blue, Color::yellow};

std::string shape_word(ObjectShape s);
std::string shape_plural(ObjectShape s);
std::string color_word(Color c);

struct SceneObject {
  ObjectShape shape;
  Color color;
  bool operator==(const SceneObject&) const = default;
};

/// g x g grid world; cell index = row * g + col.
struct Scene {
  std::size_t grid = 4;
  std::vector<std::optional<SceneObject>> cells;
  std::uint64_t seed = 0;

  std::size_t positions() const { return grid * grid; }
  std::size_t object_count() const;
  bool operator==(const Scene&) const = default;
};

struct SceneConfig {
  std::size_t grid = 4;
  double occupancy = 0.3;
};

/// Deterministic in (seed, config); at least one cell is occupied.
Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg = {});

inline constexpr std::size_t kCleanFeatureWidth = 10;  // shape(3) color(4) x,y(2) occupancy(1)

/// Noise-free region encoding, zero-padded to `width` channels.
std::vector<double> clean_region_features(const Scene& scene, std::size_t width);
/// Clean encoding plus N(0, sigma^2) noise on every channel: [K x width].
Tensor region_features(const Scene& scene, double sigma, std::uint64_t noise_seed, std::size_t width = 20);

/// Recovers (shape, color) of an occupied noise-free region by argmax.
std::optional<SceneObject> decode_region(std::span<const double> row);

enum class Category { yesno, number, other };
enum class QuestionKind { counting, existence, attribute, relational };
enum class Relation { left_of, above };

std::string category_name(Category c);
Category parse_category(const std::string& name);
Category category_of(QuestionKind k);
/// Template kind recovered from question text.
QuestionKind classify_question(const std::string& text);

struct Question {
  std::string text;
  QuestionKind kind;
  std::string answer;  // exact ground truth
};

// Question builders. Each returns nullopt when its template does not apply.
Question ask_count(const Scene& scene, std::optional<Color> color, std::optional<ObjectShape> shape);
Question ask_exists(const Scene& scene, Color color, ObjectShape shape);
std::optional<Question> ask_color(const Scene& scene, ObjectShape shape);
std::optional<Question> ask_relation(const Scene& scene, std::size_t reference_cell, Relation relation);

/// Brute-force neighbor lookup used to answer relational questions.
std::string neighbor_answer(const Scene& scene, std::size_t cell, Relation relation);

/// Plausible answers of the same template family, used for annotation noise.
std::vector<std::string> plausible_answers(QuestionKind kind, std::size_t grid);

/// Question and answer vocabularies; token id 0 is padding, 1 is unknown.
class Vocab {
 public:
  static Vocab for_grid(std::size_t grid);
  static Vocab from_maps(std::vector<std::string> tokens, std::vector<std::string> answers);

  std::size_t token_count() const { return tokens_.size(); }
  std::size_t answer_count() const { return answers_.size(); }
  std::size_t token_id(const std::string& word) const;  // unknown words map to 1
  std::optional<std::size_t> answer_id(const std::string& answer) const;
  const std::string& token(std::size_t id) const;
  const std::string& answer(std::size_t id) const;
  std::vector<std::size_t> tokenize(const std::string& text) const;
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::string>& answers() const { return answers_; }
  bool operator==(const Vocab& o) const { return tokens_ == o.tokens_ && answers_ == o.answers_; }

 private:
  std::vector<std::string> tokens_;
  std::vector<std::string> answers_;
  std::map<std::string, std::size_t> token_ids_;
  std::map<std::string, std::size_t> answer_ids_;
};

inline constexpr std::size_t kUnknownToken = 1;

struct VQASample {
  std::uint64_t id = 0;
  std::string question;
  std::vector<std::size_t> tokens;
  Category category = Category::other;
  std::vector<double> features;  // row-major [K x region_features]
  std::vector<std::string> annotations;
  std::uint64_t scene_seed = 0;

  QuestionKind kind() const { return classify_question(question); }
  bool operator==(const VQASample&) const = default;
};

struct DatasetConfig {
  std::size_t scenes = 1000;
  std::uint64_t seed = 0;
  SceneConfig scene;
  std::size_t region_features = 20;
  double noise = 0.05;
  std::size_t questions_per_scene = 4;
  double yesno_share = 0.3;
  double number_share = 0.4;  // the rest are "other"
  double corruption = 0.1;

  void validate() const;
};

/// Ten annotations of `answer`, each independently replaced with probability
/// `corruption` by a different plausible answer of the same template family.
std::vector<std::string> annotate(const std::string& answer, QuestionKind kind, std::size_t grid,
                                  double corruption, Rng& rng);

/// Samples for one scene according to the configured category shares.
std::vector<VQASample> generate_questions(const Scene& scene, const Tensor& features, const DatasetConfig& cfg,
                                          const Vocab& vocab, Rng& rng);

/// Scene index i uses seed (cfg.seed << 32) + i; even scene seeds go to the
/// training split, odd ones to validation.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index);

struct Dataset {
  Vocab vocab;
  std::vector<VQASample> train;
  std::vector<VQASample> val;
};

Dataset build_dataset(const DatasetConfig& cfg);

/// Mean over samples of the best achievable consensus accuracy.
double accuracy_ceiling(const std::vector<VQASample>& samples);

// Line-delimited JSON records, one sample per line.
void write_dataset(const std::vector<VQASample>& samples, const std::filesystem::path& path);
std::vector<VQASample> read_dataset(const std::filesystem::path& path);

// "<id>\t<string>" per line.
void write_vocab(const Vocab& vocab, const std::filesystem::path& tokens_path, const std::filesystem::path& answers_path);
Vocab read_vocab(const std::filesystem::path& tokens_path, const std::filesystem::path& answers_path);

/// Standard file names inside a dataset directory.
struct DatasetFiles {
  std::filesystem::path dir;
  std::filesystem::path train() const { return dir / "train.jsonl"; }
  std::filesystem::path val() const { return dir / "val.jsonl"; }
  std::filesystem::path tokens() const { return dir / "tokens.vocab"; }
  std::filesystem::path answers() const { return dir / "answers.vocab"; }
  std::filesystem::path meta() const { return dir / "dataset.meta"; }
};

void save_dataset(const Dataset& data, const DatasetConfig& cfg, const std::filesystem::path& dir);
struct LoadedDataset {
  Dataset data;
  std::size_t regions = 0;
  std::size_t region_features = 0;
};
LoadedDataset load_dataset(const std::filesystem::path& dir);

/// Region tensor of a sample: [regions x region_features].
Tensor sample_regions(const VQASample& sample, std::size_t regions, std::size_t region_features);

}  // namespace drau
