#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <random>

#include "drau/ablation.hpp"
#include "drau/errors.hpp"
#include "drau/export.hpp"
#include "drau/metrics.hpp"
#include "drau/train.hpp"

using namespace drau;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("drau_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

LoadedDataset small_dataset(std::size_t scenes = 60, std::uint64_t seed = 0) {
  DatasetConfig cfg;
  cfg.scenes = scenes;
  cfg.seed = seed;
  LoadedDataset d;
  d.data = build_dataset(cfg);
  d.regions = 16;
  d.region_features = cfg.region_features;
  return d;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.joint_width = 8;
  c.word_embed = 4;
  c.pretrained_embed = 4;
  c.question_hidden = 8;
  c.summary_width = 8;
  c.attn_scaled = 8;
  c.attn_hidden = 8;
  c.attn_output = 8;
  c.sketch_dim = 32;
  return c;
}

TrainConfig quick_train(Variant v, std::size_t iters) {
  TrainConfig t;
  t.variant = v;
  t.iterations = iters;
  t.batch = 4;
  t.eval_interval = 0;
  return t;
}

std::vector<std::string> ten(std::size_t matches, const std::string& answer = "yes") {
  std::vector<std::string> a(10, "other");
  for (std::size_t i = 0; i < matches; ++i) a[i] = answer;
  return a;
}

}  // namespace

TEST(Metric, ConsensusValues) {
  EXPECT_DOUBLE_EQ(vqa_accuracy("yes", ten(5)), 1.0);
  EXPECT_DOUBLE_EQ(vqa_accuracy("yes", ten(0)), 0.0);
  EXPECT_DOUBLE_EQ(vqa_accuracy("yes", ten(2)), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(vqa_accuracy("yes", ten(10)), 1.0);
  std::vector<std::string> nine(9, "yes");
  EXPECT_THROW(vqa_accuracy("yes", nine), ContractError);
}

TEST(Adam, FirstStepWithUnitGradient) {
  ParameterSet set;
  set.add("w", Tensor::scalar(0.5, true));
  TrainConfig cfg;
  auto state = AdamState::zeros(set);
  const std::vector<std::vector<double>> g{{1.0}};
  adam_step(set, g, state, cfg);
  // m_hat = 1 and v_hat = 1 at t = 1, so the step is lr / (1 + eps).
  EXPECT_NEAR(set.entries()[0].value.item() - 0.5, -7e-4 / (1.0 + 1e-8), 1e-12);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterSet set;
  set.add("w", Tensor::vector({0.1, -0.2}, true));
  TrainConfig cfg;
  auto state = AdamState::zeros(set);
  const std::vector<std::vector<double>> g{{0.0, 0.0}};
  for (int i = 0; i < 5; ++i) adam_step(set, g, state, cfg);
  EXPECT_EQ(set.entries()[0].value.to_vector(), (std::vector<double>{0.1, -0.2}));
}

TEST(Adam, FirstStepNearlyScaleInvariant) {
  auto step_with = [](double scale) {
    ParameterSet set;
    set.add("w", Tensor::vector({0.0, 0.0}, true));
    TrainConfig cfg;
    auto state = AdamState::zeros(set);
    const std::vector<std::vector<double>> g{{0.3 * scale, -2.0 * scale}};
    adam_step(set, g, state, cfg);
    return set.entries()[0].value.to_vector();
  };
  const auto a = step_with(1.0), b = step_with(2.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_LT(std::abs(a[i] - b[i]) / std::abs(a[i]), 1e-6);
}

TEST(Adam, ReplayIsBitwiseIdentical) {
  auto run = [] {
    ParameterSet set;
    set.add("w", Tensor::vector({0.1, 0.2, 0.3}, true));
    TrainConfig cfg;
    auto state = AdamState::zeros(set);
    Rng rng(5);
    std::normal_distribution<double> n(0, 1);
    for (int i = 0; i < 100; ++i) {
      const std::vector<std::vector<double>> g{{n(rng), n(rng), n(rng)}};
      adam_step(set, g, state, cfg);
    }
    return set.entries()[0].value;
  };
  EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(Adam, MismatchIsContractError) {
  ParameterSet set;
  set.add("w", Tensor::vector({0.1, 0.2}, true));
  TrainConfig cfg;
  auto state = AdamState::zeros(set);
  const std::vector<std::vector<double>> wrong_size{{1.0}};
  EXPECT_THROW(adam_step(set, wrong_size, state, cfg), ContractError);
  const std::vector<std::vector<double>> wrong_count{};
  EXPECT_THROW(adam_step(set, wrong_count, state, cfg), ContractError);
}

TEST(Evaluate, MajorityOracleReachesCeiling) {
  DatasetConfig cfg;
  cfg.scenes = 200;
  cfg.corruption = 0.3;
  const auto data = build_dataset(cfg);
  const auto report = evaluate_predictions(data.val, [](const VQASample& s) {
    std::map<std::string, int> n;
    for (const auto& a : s.annotations) ++n[a];
    return std::max_element(n.begin(), n.end(), [](auto& a, auto& b) { return a.second < b.second; })->first;
  });
  EXPECT_GE(report.overall, accuracy_ceiling(data.val) - 1e-12);
  EXPECT_LE(report.overall, 1.0);
  EXPECT_EQ(report.count, data.val.size());
  EXPECT_EQ(report.yesno_count + report.number_count + report.other_count, report.count);
}

TEST(Evaluate, UntrainedModelIsNearChance) {
  DatasetConfig dc;
  dc.scenes = 100;
  dc.corruption = 0.0;
  LoadedDataset d;
  d.data = build_dataset(dc);
  d.regions = 16;
  d.region_features = 20;
  // Expected score of a uniformly random answer.
  const double answers = static_cast<double>(d.data.vocab.answer_count());
  double chance = 0;
  for (const auto& s : d.data.val)
    for (const auto& a : d.data.vocab.answers()) chance += vqa_accuracy(a, s.annotations) / answers;
  chance /= static_cast<double>(d.data.val.size());

  std::vector<double> acc;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    TrainConfig t = quick_train(Variant::simple_conv, 0);
    t.seed = seed;
    const auto params = ModelParams::create(model_config_for(tiny_model(), d, t));
    acc.push_back(evaluate(params, d.data.val, d.data.vocab, 16, 20).overall);
  }
  const auto s = summarize(acc);
  EXPECT_LT(std::abs(s.mean - chance), 3 * s.std / std::sqrt(static_cast<double>(s.n)) + 1e-9)
      << "mean " << s.mean << " chance " << chance;
}

TEST(Train, ZeroIterationsKeepsInitialization) {
  const auto d = small_dataset(10);
  const auto t = quick_train(Variant::drau, 0);
  const auto result = train(tiny_model(), d, t);
  const auto init = ModelParams::create(model_config_for(tiny_model(), d, t));
  const auto restored = restore_model(result.final);
  const auto a = init.parameters(), b = restored.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bitwise_equal(a.entries()[i].value, b.entries()[i].value));
  EXPECT_TRUE(result.trace.empty());
}

TEST(Train, SameSeedSameTrace) {
  const auto d = small_dataset(20);
  auto t = quick_train(Variant::dca_rvau, 15);
  t.eval_interval = 5;
  const auto a = train(tiny_model(), d, t);
  const auto b = train(tiny_model(), d, t);
  ASSERT_EQ(a.trace.size(), 15u);
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(std::bit_cast<std::uint64_t>(a.trace[i].loss), std::bit_cast<std::uint64_t>(b.trace[i].loss));
    EXPECT_EQ(a.trace[i].val_accuracy, b.trace[i].val_accuracy);
  }
  EXPECT_TRUE(a.trace[4].val_accuracy && !a.trace[3].val_accuracy);
  t.seed = 1;
  const auto c = train(tiny_model(), d, t);
  EXPECT_NE(c.trace[0].loss, a.trace[0].loss);
}

TEST(Train, SmoothedLossDecreasesEarly) {
  const auto d = small_dataset(1000);
  TrainConfig t;
  t.variant = Variant::simple_rvau;
  t.iterations = 200;
  t.eval_interval = 0;
  const auto result = train(tiny_model(), d, t);
  std::vector<double> windows;
  for (std::size_t w = 0; w < 4; ++w) {
    double s = 0;
    for (std::size_t i = 0; i < 50; ++i) s += result.trace[w * 50 + i].loss;
    windows.push_back(s / 50);
  }
  for (std::size_t w = 1; w < 4; ++w) EXPECT_LT(windows[w], windows[w - 1]) << w;
}

TEST(Train, NonFiniteInputIsDiagnosed) {
  auto d = small_dataset(4);
  for (auto& s : d.data.train) s.features[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    train(tiny_model(), d, quick_train(Variant::simple_conv, 2));
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("input regions"), std::string::npos) << e.what();
  }
}

TEST(Train, EmptySplitIsRejected) {
  LoadedDataset d;
  d.data.vocab = Vocab::for_grid(4);
  d.regions = 16;
  d.region_features = 20;
  EXPECT_THROW(train(tiny_model(), d, quick_train(Variant::drau, 1)), ContractError);
}

TEST(Checkpoint, RoundTripIsBitwise) {
  const auto d = small_dataset(20);
  auto t = quick_train(Variant::drau, 3);
  const auto result = train(tiny_model(), d, t);
  const auto dir = scratch("ckpt");
  save_checkpoint(result.final, dir / "a.ckpt");
  const auto back = load_checkpoint(dir / "a.ckpt");
  ASSERT_EQ(back.tensors.size(), result.final.tensors.size());
  for (std::size_t i = 0; i < back.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, result.final.tensors[i].name);
    EXPECT_EQ(back.tensors[i].shape, result.final.tensors[i].shape);
    for (std::size_t j = 0; j < back.tensors[i].values.size(); ++j) {
      ASSERT_EQ(std::bit_cast<std::uint64_t>(back.tensors[i].values[j]),
                std::bit_cast<std::uint64_t>(result.final.tensors[i].values[j]));
    }
  }
  EXPECT_EQ(back.step, 3u);
  EXPECT_EQ(back.adam_step, 3u);
  EXPECT_EQ(back.model.variant, Variant::drau);
  EXPECT_TRUE(back.find("adam.m/classifier.weight"));

  const auto r1 = evaluate(result.final, d.data.val, d.data.vocab, 16, 20);
  const auto r2 = evaluate(back, d.data.val, d.data.vocab, 16, 20);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(r1.overall), std::bit_cast<std::uint64_t>(r2.overall));

  save_checkpoint(back, dir / "b.ckpt");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(fa), {}), std::string(std::istreambuf_iterator<char>(fb), {}));

  const auto adam = restore_adam(back, restore_model(back));
  EXPECT_EQ(adam.t, 3u);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  const auto d = small_dataset(4);
  const auto result = train(tiny_model(), d, quick_train(Variant::simple_conv, 0));
  const auto dir = scratch("corrupt");
  save_checkpoint(result.final, dir / "ok.ckpt");
  std::ifstream in(dir / "ok.ckpt", std::ios::binary);
  const std::string bytes(std::istreambuf_iterator<char>(in), {});

  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() - 5);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), ParseError);
  std::ofstream(dir / "long.ckpt", std::ios::binary) << bytes << "xx";
  EXPECT_THROW(load_checkpoint(dir / "long.ckpt"), ParseError);
  std::ofstream(dir / "magic.ckpt", std::ios::binary) << "not-a-checkpoint\n";
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), ParseError);
  EXPECT_THROW(load_checkpoint(dir / "absent.ckpt"), IoError);
}

TEST(Checkpoint, VocabMismatchIsConfigError) {
  const auto d = small_dataset(4);
  const auto result = train(tiny_model(), d, quick_train(Variant::simple_conv, 0));
  auto other = Vocab::from_maps({"<pad>", "<unk>", "x"}, {"a"});
  EXPECT_THROW(evaluate(result.final, d.data.val, other, 16, 20), ConfigError);
  EXPECT_THROW(evaluate(result.final, d.data.val, Vocab::for_grid(5), 16, 20), ConfigError);
}

TEST(Trace, FileFormat) {
  const auto dir = scratch("trace");
  write_trace({{1, 2.5, std::nullopt}, {2, 1.25, 0.5}}, dir / "t.tsv");
  std::ifstream in(dir / "t.tsv");
  std::string all(std::istreambuf_iterator<char>(in), {});
  EXPECT_EQ(all, "step\tloss\tval_accuracy\n1\t2.5\t-\n2\t1.25\t0.5\n");
}

TEST(Ablation, StatsAndGap) {
  const auto s = summarize({1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
  EXPECT_EQ(summarize({4.0}).std, 0.0);
  EXPECT_DOUBLE_EQ(median({3, 1, 2, 10}), 2.5);
  EXPECT_DOUBLE_EQ(parameter_gap({100, 99, 98}), 0.02);
}

TEST(Ablation, TableShapeWithOneSeed) {
  const auto d = small_dataset(12);
  AblationConfig cfg;
  cfg.model = tiny_model();
  cfg.train = quick_train(Variant::drau, 2);
  cfg.seeds = {0};
  cfg.jobs = 2;
  const auto table = run_ablation(cfg, d);
  ASSERT_EQ(table.rows.size(), 6u);
  for (const auto& r : table.rows) {
    EXPECT_EQ(r.all.n, 1u);
    EXPECT_EQ(r.all.std, 0.0);
    EXPECT_EQ(r.failures, 0u);
  }
  EXPECT_TRUE(table.counts_matched()) << table.max_parameter_gap;
  EXPECT_EQ(table.gaps.size(), 3u);
  const auto tsv = table.to_tsv();
  EXPECT_EQ(tsv.rfind("variant\tparams\tAll\tY/N\tNum\tOther\tCount+Rel\truns\tfailures\n", 0), 0u);
  EXPECT_NE(tsv.find("±0.0000"), std::string::npos);

  cfg.jobs = 1;
  const auto serial = run_ablation(cfg, d);
  EXPECT_EQ(serial.to_tsv(), tsv);
}

TEST(Ablation, FailedRunsAreRecorded) {
  auto d = small_dataset(4);
  for (auto& s : d.data.train) s.features[0] = std::numeric_limits<double>::infinity();
  AblationConfig cfg;
  cfg.model = tiny_model();
  cfg.train = quick_train(Variant::drau, 1);
  cfg.variants = {Variant::simple_conv, Variant::simple_rvau};
  cfg.seeds = {0, 1};
  const auto table = run_ablation(cfg, d);
  for (const auto& r : table.rows) EXPECT_EQ(r.failures, 2u);
  EXPECT_NE(table.to_tsv().find("# failed simple-conv seed 0"), std::string::npos);
}

TEST(Export, UniformAndOneHotImages) {
  const std::vector<double> uniform(16, 1.0 / 16);
  const auto flat = attention_image(uniform, 4);
  for (int p : flat.pixels) EXPECT_EQ(p, 255);
  std::vector<double> one(16, 0.0);
  one[5] = 1.0;
  const auto spot = attention_image(one, 4);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(spot.pixels[i], i == 5 ? 255 : 0);
  EXPECT_THROW(attention_image(one, 3), DimensionError);
}

TEST(Export, PgmRoundTripWithinQuantization) {
  Rng rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> w(16);
  double total = 0;
  for (auto& x : w) total += (x = u(rng));
  for (auto& x : w) x /= total;
  const auto dir = scratch("pgm");
  write_pgm(attention_image(w, 4), dir / "a.pgm");
  const auto back = image_weights(read_pgm(dir / "a.pgm"));
  const double peak = *std::max_element(w.begin(), w.end());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_LE(std::abs(back[i] - w[i]), peak / 255 / 2 + 1e-15);
}

TEST(Export, WritesPerGlimpseFiles) {
  const auto d = small_dataset(8);
  const auto result = train(tiny_model(), d, quick_train(Variant::drau, 1));
  const auto dir = scratch("attn");
  const auto& sample = d.data.val[0];
  const auto ex = export_attention(result.final, sample, d.data.vocab, 16, 20, dir);
  EXPECT_EQ(ex.files.size(), 5u);  // 2 visual, 2 textual, answer
  EXPECT_TRUE(fs::exists(dir / "visual_glimpse1.pgm"));
  EXPECT_TRUE(fs::exists(dir / "textual_glimpse0.tsv"));
  EXPECT_DOUBLE_EQ(ex.score, vqa_accuracy(ex.answer, sample.annotations));

  // Re-parsed maps agree with the in-memory forward pass within one grey level.
  const auto params = restore_model(result.final);
  Rng unused(0);
  const auto out = model_forward({sample_regions(sample, 16, 20), sample.tokens}, params, Mode::eval, unused);
  const auto row = out.visual->row(1);
  const auto back = image_weights(read_pgm(dir / "visual_glimpse1.pgm"));
  const double peak = *std::max_element(row.begin(), row.end());
  for (std::size_t i = 0; i < 16; ++i) EXPECT_LE(std::abs(back[i] - row[i]), peak / 255);
}
