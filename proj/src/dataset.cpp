#include "drau/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "drau/errors.hpp"
#include "drau/metrics.hpp"

namespace drau {

std::string shape_word(ObjectShape s) {
  switch (s) {
    case ObjectShape::circle:
      return "circle";
    case ObjectShape::square:
      return "square";
    case ObjectShape::triangle:
      return "triangle";
  }
  return "";
}

std::string shape_plural(ObjectShape s) { return shape_word(s) + "s"; }

std::string color_word(Color c) {
  switch (c) {
    case Color::red:
      return "red";
    case Color::green:
      return "green";
    case Color::blue:
      return "blue";
    case Color::yellow:
      return "yellow";
  }
  return "";
}

namespace {

std::string object_phrase(const SceneObject& o) { return color_word(o.color) + " " + shape_word(o.shape); }

template <typename T, std::size_t N>
T pick(const std::array<T, N>& items, Rng& rng) {
  return items[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

}  // namespace

std::size_t Scene::object_count() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const auto& c) { return c.has_value(); }));
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  if (cfg.grid < 2) throw ConfigError("scene grid side must be at least 2, got " + std::to_string(cfg.grid));
  if (!(cfg.occupancy > 0.0 && cfg.occupancy <= 1.0)) throw ConfigError("occupancy must be in (0, 1]");
  Scene scene;
  scene.grid = cfg.grid;
  scene.seed = seed;
  scene.cells.resize(cfg.grid * cfg.grid);
  Rng rng(mix_seed(seed));
  std::bernoulli_distribution occupied(cfg.occupancy);
  for (auto& cell : scene.cells) {
    const bool here = occupied(rng);
    const auto shape = pick(kShapes, rng);
    const auto color = pick(kColors, rng);
    if (here) cell = SceneObject{shape, color};
  }
  if (scene.object_count() == 0) {
    const auto at = std::uniform_int_distribution<std::size_t>(0, scene.cells.size() - 1)(rng);
    scene.cells[at] = SceneObject{pick(kShapes, rng), pick(kColors, rng)};
  }
  return scene;
}

std::vector<double> clean_region_features(const Scene& scene, std::size_t width) {
  if (width < kCleanFeatureWidth) {
    throw ConfigError("region feature width must be at least " + std::to_string(kCleanFeatureWidth));
  }
  const std::size_t g = scene.grid;
  std::vector<double> out(scene.positions() * width, 0.0);
  for (std::size_t cell = 0; cell < scene.positions(); ++cell) {
    double* row = out.data() + cell * width;
    const double side = static_cast<double>(g);
    row[7] = (static_cast<double>(cell % g) + 0.5) / side;  // x, cell centre
    row[8] = (static_cast<double>(cell / g) + 0.5) / side;  // y
    if (const auto& obj = scene.cells[cell]) {
      row[static_cast<std::size_t>(obj->shape)] = 1.0;
      row[3 + static_cast<std::size_t>(obj->color)] = 1.0;
      row[9] = 1.0;
    }
  }
  return out;
}

Tensor region_features(const Scene& scene, double sigma, std::uint64_t noise_seed, std::size_t width) {
  auto values = clean_region_features(scene, width);
  if (sigma > 0.0) {
    Rng rng(mix_seed(noise_seed));
    std::normal_distribution<double> noise(0.0, sigma);
    for (auto& v : values) v += noise(rng);
  } else if (sigma < 0.0) {
    throw ConfigError("noise level must be non-negative");
  }
  return Tensor::from({scene.positions(), width}, std::move(values));
}

std::optional<SceneObject> decode_region(std::span<const double> row) {
  if (row.size() < kCleanFeatureWidth) throw DimensionError("decode_region: row too short");
  if (row[9] < 0.5) return std::nullopt;
  const auto shape = std::max_element(row.begin(), row.begin() + 3) - row.begin();
  const auto color = std::max_element(row.begin() + 3, row.begin() + 7) - (row.begin() + 3);
  return SceneObject{kShapes[static_cast<std::size_t>(shape)], kColors[static_cast<std::size_t>(color)]};
}

std::string category_name(Category c) {
  switch (c) {
    case Category::yesno:
      return "yesno";
    case Category::number:
      return "number";
    case Category::other:
      return "other";
  }
  return "";
}

Category parse_category(const std::string& name) {
  if (name == "yesno") return Category::yesno;
  if (name == "number") return Category::number;
  if (name == "other") return Category::other;
  throw ParseError("unknown category '" + name + "'");
}

Category category_of(QuestionKind k) {
  switch (k) {
    case QuestionKind::counting:
      return Category::number;
    case QuestionKind::existence:
      return Category::yesno;
    default:
      return Category::other;
  }
}

QuestionKind classify_question(const std::string& text) {
  auto starts = [&](const char* prefix) { return text.rfind(prefix, 0) == 0; };
  if (starts("how many")) return QuestionKind::counting;
  if (starts("is there")) return QuestionKind::existence;
  if (starts("what color")) return QuestionKind::attribute;
  if (starts("what is")) return QuestionKind::relational;
  throw ParseError("question '" + text + "' matches no template");
}

Question ask_count(const Scene& scene, std::optional<Color> color, std::optional<ObjectShape> shape) {
  std::size_t count = 0;
  for (const auto& cell : scene.cells) {
    if (!cell) continue;
    if (color && cell->color != *color) continue;
    if (shape && cell->shape != *shape) continue;
    ++count;
  }
  std::string text = "how many ";
  if (color) text += color_word(*color) + " ";
  text += shape ? shape_plural(*shape) : std::string("objects");
  text += " are there";
  return {text, QuestionKind::counting, std::to_string(count)};
}

Question ask_exists(const Scene& scene, Color color, ObjectShape shape) {
  const SceneObject target{shape, color};
  const bool found = std::any_of(scene.cells.begin(), scene.cells.end(), [&](const auto& c) { return c == target; });
  return {"is there a " + object_phrase(target), QuestionKind::existence, found ? "yes" : "no"};
}

std::optional<Question> ask_color(const Scene& scene, ObjectShape shape) {
  std::optional<Color> color;
  std::size_t matches = 0;
  for (const auto& cell : scene.cells) {
    if (cell && cell->shape == shape) {
      ++matches;
      color = cell->color;
    }
  }
  if (matches != 1) return std::nullopt;
  return Question{"what color is the " + shape_word(shape), QuestionKind::attribute, color_word(*color)};
}

std::string neighbor_answer(const Scene& scene, std::size_t cell, Relation relation) {
  const std::size_t g = scene.grid;
  const std::size_t row = cell / g, col = cell % g;
  // Scan the whole grid for the cell at the requested offset.
  for (std::size_t other = 0; other < scene.positions(); ++other) {
    const std::size_t r = other / g, c = other % g;
    const bool hit = relation == Relation::left_of ? (r == row && c + 1 == col) : (c == col && r + 1 == row);
    if (hit) return scene.cells[other] ? object_phrase(*scene.cells[other]) : "nothing";
  }
  throw ContractError("cell has no neighbor in that direction");
}

std::optional<Question> ask_relation(const Scene& scene, std::size_t reference_cell, Relation relation) {
  if (reference_cell >= scene.positions() || !scene.cells[reference_cell]) return std::nullopt;
  const auto& ref = *scene.cells[reference_cell];
  const auto same = std::count(scene.cells.begin(), scene.cells.end(), std::optional<SceneObject>(ref));
  if (same != 1) return std::nullopt;
  const std::size_t g = scene.grid;
  if (relation == Relation::left_of && reference_cell % g == 0) return std::nullopt;
  if (relation == Relation::above && reference_cell / g == 0) return std::nullopt;
  const std::string rel = relation == Relation::left_of ? "left of" : "above";
  return Question{"what is " + rel + " the " + object_phrase(ref), QuestionKind::relational,
                  neighbor_answer(scene, reference_cell, relation)};
}

std::vector<std::string> plausible_answers(QuestionKind kind, std::size_t grid) {
  std::vector<std::string> out;
  switch (kind) {
    case QuestionKind::counting:
      for (std::size_t n = 0; n <= grid * grid; ++n) out.push_back(std::to_string(n));
      break;
    case QuestionKind::existence:
      out = {"yes", "no"};
      break;
    case QuestionKind::attribute:
      for (auto c : kColors) out.push_back(color_word(c));
      break;
    case QuestionKind::relational:
      for (auto c : kColors)
        for (auto s : kShapes) out.push_back(object_phrase({s, c}));
      out.push_back("nothing");
      break;
  }
  return out;
}

Vocab Vocab::for_grid(std::size_t grid) {
  std::vector<std::string> tokens{"<pad>", "<unk>", "how", "many", "objects", "are", "there", "is", "a",
                                  "what",  "color", "the", "left", "of",     "above"};
  for (auto c : kColors) tokens.push_back(color_word(c));
  for (auto s : kShapes) {
    tokens.push_back(shape_word(s));
    tokens.push_back(shape_plural(s));
  }
  std::vector<std::string> answers;
  for (auto kind : {QuestionKind::counting, QuestionKind::existence, QuestionKind::attribute, QuestionKind::relational}) {
    for (auto& a : plausible_answers(kind, grid)) answers.push_back(std::move(a));
  }
  return from_maps(std::move(tokens), std::move(answers));
}

Vocab Vocab::from_maps(std::vector<std::string> tokens, std::vector<std::string> answers) {
  if (tokens.size() < 2 || tokens[0] != "<pad>" || tokens[1] != "<unk>") {
    throw ConfigError("token vocabulary must start with <pad> and <unk>");
  }
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.answers_ = std::move(answers);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
    if (!v.token_ids_.emplace(v.tokens_[i], i).second) throw ConfigError("duplicate token '" + v.tokens_[i] + "'");
  }
  for (std::size_t i = 0; i < v.answers_.size(); ++i) {
    if (!v.answer_ids_.emplace(v.answers_[i], i).second) throw ConfigError("duplicate answer '" + v.answers_[i] + "'");
  }
  return v;
}

std::size_t Vocab::token_id(const std::string& word) const {
  auto it = token_ids_.find(word);
  return it == token_ids_.end() ? kUnknownToken : it->second;
}

std::optional<std::size_t> Vocab::answer_id(const std::string& answer) const {
  auto it = answer_ids_.find(answer);
  if (it == answer_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) throw LookupError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

const std::string& Vocab::answer(std::size_t id) const {
  if (id >= answers_.size()) throw LookupError("answer id " + std::to_string(id) + " out of range");
  return answers_[id];
}

std::vector<std::size_t> Vocab::tokenize(const std::string& text) const {
  std::istringstream in(text);
  std::vector<std::size_t> ids;
  for (std::string word; in >> word;) ids.push_back(token_id(word));
  return ids;
}

void DatasetConfig::validate() const {
  if (questions_per_scene == 0) throw ConfigError("questions per scene must be positive");
  if (yesno_share < 0.0 || number_share < 0.0 || yesno_share + number_share > 1.0) {
    throw ConfigError("category shares must be non-negative and sum to at most 1");
  }
  if (!(corruption >= 0.0 && corruption <= 1.0)) throw ConfigError("corruption rate must be in [0, 1]");
  if (noise < 0.0) throw ConfigError("noise level must be non-negative");
  if (region_features < kCleanFeatureWidth) throw ConfigError("region feature width too small");
  if (scene.grid < 2) throw ConfigError("scene grid side must be at least 2");
}

std::vector<std::string> annotate(const std::string& answer, QuestionKind kind, std::size_t grid, double corruption,
                                  Rng& rng) {
  auto pool = plausible_answers(kind, grid);
  pool.erase(std::remove(pool.begin(), pool.end(), answer), pool.end());
  std::bernoulli_distribution corrupt(corruption);
  std::uniform_int_distribution<std::size_t> choose(0, pool.empty() ? 0 : pool.size() - 1);
  std::vector<std::string> out;
  out.reserve(kAnnotationsPerQuestion);
  for (std::size_t i = 0; i < kAnnotationsPerQuestion; ++i) {
    if (corrupt(rng) && !pool.empty()) {
      out.push_back(pool[choose(rng)]);
    } else {
      out.push_back(answer);
    }
  }
  return out;
}

namespace {

Question random_counting(const Scene& scene, Rng& rng) {
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0:
      return ask_count(scene, std::nullopt, std::nullopt);
    case 1:
      return ask_count(scene, pick(kColors, rng), std::nullopt);
    default:
      return ask_count(scene, std::nullopt, pick(kShapes, rng));
  }
}

Question random_existence(const Scene& scene, Rng& rng) {
  // Half the time ask about an object that is present, to balance yes/no.
  if (std::bernoulli_distribution(0.5)(rng)) {
    std::vector<SceneObject> present;
    for (const auto& c : scene.cells)
      if (c) present.push_back(*c);
    const auto& o = present[std::uniform_int_distribution<std::size_t>(0, present.size() - 1)(rng)];
    return ask_exists(scene, o.color, o.shape);
  }
  const auto color = pick(kColors, rng);
  return ask_exists(scene, color, pick(kShapes, rng));
}

std::optional<Question> random_attribute(const Scene& scene, Rng& rng) {
  std::vector<Question> options;
  for (auto s : kShapes)
    if (auto q = ask_color(scene, s)) options.push_back(*q);
  if (options.empty()) return std::nullopt;
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

std::optional<Question> random_relational(const Scene& scene, Rng& rng) {
  std::vector<Question> options;
  for (std::size_t cell = 0; cell < scene.positions(); ++cell)
    for (auto rel : {Relation::left_of, Relation::above})
      if (auto q = ask_relation(scene, cell, rel)) options.push_back(*q);
  if (options.empty()) return std::nullopt;
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

}  // namespace

std::vector<VQASample> generate_questions(const Scene& scene, const Tensor& features, const DatasetConfig& cfg,
                                          const Vocab& vocab, Rng& rng) {
  std::vector<VQASample> out;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t slot = 0; slot < cfg.questions_per_scene; ++slot) {
    std::optional<Question> q;
    const double u = unit(rng);
    if (u >= cfg.yesno_share + cfg.number_share) {
      const bool attribute_first = std::bernoulli_distribution(0.5)(rng);
      q = attribute_first ? random_attribute(scene, rng) : random_relational(scene, rng);
      if (!q) q = attribute_first ? random_relational(scene, rng) : random_attribute(scene, rng);
      // No attribute or relational question fits this scene; fall back to
      // the other categories in proportion.
      if (!q) {
        const double total = cfg.yesno_share + cfg.number_share;
        const bool yesno = total > 0.0 ? unit(rng) * total < cfg.yesno_share : true;
        q = yesno ? random_existence(scene, rng) : random_counting(scene, rng);
      }
    } else if (u < cfg.yesno_share) {
      q = random_existence(scene, rng);
    } else {
      q = random_counting(scene, rng);
    }
    VQASample s;
    s.question = q->text;
    s.tokens = vocab.tokenize(q->text);
    s.category = category_of(q->kind);
    s.features = features.to_vector();
    s.annotations = annotate(q->answer, q->kind, scene.grid, cfg.corruption, rng);
    s.scene_seed = scene.seed;
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  return (dataset_seed << 32) + static_cast<std::uint64_t>(index);
}

Dataset build_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.vocab = Vocab::for_grid(cfg.scene.grid);
  std::uint64_t next_id = 0;
  for (std::size_t i = 0; i < cfg.scenes; ++i) {
    const auto seed = scene_seed(cfg.seed, i);
    const auto scene = generate_scene(seed, cfg.scene);
    const auto features = region_features(scene, cfg.noise, derive_seed(seed, 1), cfg.region_features);
    auto rng = make_rng(seed, 2);
    auto samples = generate_questions(scene, features, cfg, data.vocab, rng);
    auto& split = seed % 2 == 0 ? data.train : data.val;
    for (auto& s : samples) {
      s.id = next_id++;
      split.push_back(std::move(s));
    }
  }
  return data;
}

double accuracy_ceiling(const std::vector<VQASample>& samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : samples) {
    double best = 0.0;
    for (const auto& a : s.annotations) best = std::max(best, vqa_accuracy(a, s.annotations));
    total += best;
  }
  return total / static_cast<double>(samples.size());
}

void write_dataset(const std::vector<VQASample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["id"] = s.id;
    j["question"] = s.question;
    j["tokens"] = s.tokens;
    j["category"] = category_name(s.category);
    j["features"] = s.features;
    j["annotations"] = s.annotations;
    j["scene_seed"] = s.scene_seed;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<VQASample> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<VQASample> samples;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      VQASample s;
      s.id = j.at("id").get<std::uint64_t>();
      s.question = j.at("question").get<std::string>();
      s.tokens = j.at("tokens").get<std::vector<std::size_t>>();
      s.category = parse_category(j.at("category").get<std::string>());
      s.features = j.at("features").get<std::vector<double>>();
      s.annotations = j.at("annotations").get<std::vector<std::string>>();
      s.scene_seed = j.at("scene_seed").get<std::uint64_t>();
      if (s.annotations.size() != kAnnotationsPerQuestion) throw ParseError("expected 10 annotations");
      if (s.tokens.empty()) throw ParseError("empty token list");
      if (category_of(classify_question(s.question)) != s.category) {
        throw ParseError("category does not match question template");
      }
      samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
  }
  return samples;
}

namespace {

void write_map(const std::vector<std::string>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < entries.size(); ++i) out << i << '\t' << entries[i] << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

std::vector<std::string> read_map(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": missing tab");
    std::size_t id = 0;
    try {
      id = std::stoull(line.substr(0, tab));
    } catch (const std::exception&) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad id");
    }
    if (id != entries.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": ids must be consecutive from 0");
    }
    entries.push_back(line.substr(tab + 1));
  }
  return entries;
}

}  // namespace

void write_vocab(const Vocab& vocab, const std::filesystem::path& tokens_path,
                 const std::filesystem::path& answers_path) {
  write_map(vocab.tokens(), tokens_path);
  write_map(vocab.answers(), answers_path);
}

Vocab read_vocab(const std::filesystem::path& tokens_path, const std::filesystem::path& answers_path) {
  return Vocab::from_maps(read_map(tokens_path), read_map(answers_path));
}

void save_dataset(const Dataset& data, const DatasetConfig& cfg, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const DatasetFiles files{dir};
  write_dataset(data.train, files.train());
  write_dataset(data.val, files.val());
  write_vocab(data.vocab, files.tokens(), files.answers());
  std::ofstream meta(files.meta(), std::ios::binary | std::ios::trunc);
  if (!meta) throw IoError("cannot open " + files.meta().string() + " for writing");
  meta << "grid=" << cfg.scene.grid << '\n'
       << "regions=" << cfg.scene.grid * cfg.scene.grid << '\n'
       << "region_features=" << cfg.region_features << '\n'
       << "seed=" << cfg.seed << '\n'
       << "scenes=" << cfg.scenes << '\n';
}

LoadedDataset load_dataset(const std::filesystem::path& dir) {
  const DatasetFiles files{dir};
  LoadedDataset out;
  std::ifstream meta(files.meta());
  if (!meta) throw IoError("cannot open " + files.meta().string());
  for (std::string line; std::getline(meta, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "regions") out.regions = std::stoull(value);
    if (key == "region_features") out.region_features = std::stoull(value);
  }
  if (out.regions == 0 || out.region_features == 0) throw ParseError(files.meta().string() + ": missing sizes");
  out.data.vocab = read_vocab(files.tokens(), files.answers());
  out.data.train = read_dataset(files.train());
  out.data.val = read_dataset(files.val());
  return out;
}

Tensor sample_regions(const VQASample& sample, std::size_t regions, std::size_t region_features) {
  if (sample.features.size() != regions * region_features) {
    throw DimensionError("sample " + std::to_string(sample.id) + " has " + std::to_string(sample.features.size()) +
                         " feature values, expected " + std::to_string(regions * region_features));
  }
  return Tensor::from({regions, region_features}, sample.features);
}

}  // namespace drau
