#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" + std::string(DRAU_CLI_PATH) + "' " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string line_with(const std::string& text, const std::string& prefix) {
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);)
    if (line.rfind(prefix, 0) == 0) return line;
  return "";
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = fs::temp_directory_path() / "drau_cli_test";
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "tiny.cfg") << "joint_width=8\nword_embed=4\npretrained_embed=4\nquestion_hidden=8\n"
                                         "summary_width=8\nattn_scaled=8\nattn_hidden=8\nattn_output=8\n"
                                         "sketch_dim=32\nbatch=4\neval_interval=0\n";
    ASSERT_EQ(run("gen-data --scenes 12 --out " + data()).code, 0);
  }
  static std::string data() { return (root_ / "data").string(); }
  static std::string tiny() { return "--config " + (root_ / "tiny.cfg").string(); }
  static fs::path root_;
};

fs::path Cli::root_;

}  // namespace

TEST_F(Cli, GenDataIsDeterministic) {
  const auto a = root_ / "a", b = root_ / "b";
  ASSERT_EQ(run("gen-data --scenes 6 --seed 4 --out " + a.string()).code, 0);
  ASSERT_EQ(run("gen-data --scenes 6 --seed 4 --out " + b.string()).code, 0);
  for (const char* f : {"train.jsonl", "val.jsonl", "tokens.vocab", "answers.vocab", "dataset.meta"}) {
    EXPECT_FALSE(slurp(a / f).empty() && std::string(f) == "train.jsonl") << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST_F(Cli, EmptyDatasetAndBadFlags) {
  const auto r = run("gen-data --scenes 0 --out " + (root_ / "empty").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train\t0 samples"), std::string::npos) << r.out;
  EXPECT_EQ(run("gen-data --bogus 1 --out x").code, 2);
  EXPECT_EQ(run("gen-data --noise loud --out " + (root_ / "x").string()).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, EchoComesFirst) {
  const auto r = run("gen-data --scenes 1 --out " + (root_ / "echo").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("drau ", 0), 0u);
  std::istringstream in(r.out);
  std::string first, second;
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_NE(first.find("gen-data"), std::string::npos);
  EXPECT_EQ(second, "seed=0");
  EXPECT_EQ(line_with(r.out, "config.scenes="), "config.scenes=1");
}

TEST_F(Cli, SettingPrecedence) {
  std::ofstream(root_ / "seed.cfg") << "seed=7\n";
  const auto out = (root_ / "prec").string();
  const std::string cfg = "--config " + (root_ / "seed.cfg").string();
  EXPECT_EQ(line_with(run("gen-data --scenes 1 --out " + out, "DRAU_SEED=5").out, "seed="), "seed=5");
  EXPECT_EQ(line_with(run(cfg + " gen-data --scenes 1 --out " + out, "DRAU_SEED=5").out, "seed="), "seed=7");
  EXPECT_EQ(line_with(run(cfg + " gen-data --seed 9 --scenes 1 --out " + out, "DRAU_SEED=5").out, "seed="),
            "seed=9");
  std::ofstream(root_ / "bad.cfg") << "learning_rate=1\n";
  EXPECT_EQ(run("--config " + (root_ / "bad.cfg").string() + " gen-data --out " + out).code, 2);
}

TEST_F(Cli, TrainEvalAttnRoundTrip) {
  const auto o1 = root_ / "run1", o2 = root_ / "run2";
  ASSERT_EQ(run(tiny() + " train --iters 4 --data " + data() + " --out " + o1.string()).code, 0);
  ASSERT_EQ(run(tiny() + " train --iters 4 --data " + data() + " --out " + o2.string()).code, 0);
  EXPECT_EQ(slurp(o1 / "trace.tsv"), slurp(o2 / "trace.tsv"));
  EXPECT_EQ(slurp(o1 / "final.ckpt"), slurp(o2 / "final.ckpt"));

  const auto zero = root_ / "run0";
  ASSERT_EQ(run(tiny() + " train --iters 0 --data " + data() + " --out " + zero.string()).code, 0);
  EXPECT_EQ(slurp(zero / "trace.tsv"), "step\tloss\tval_accuracy\n");

  const auto ev = run("eval --data " + data() + " --checkpoint " + (o1 / "final.ckpt").string());
  ASSERT_EQ(ev.code, 0);
  EXPECT_EQ(line_with(ev.out, "variant\t"), "variant\tdrau");
  EXPECT_FALSE(line_with(ev.out, "All\t").empty());
  EXPECT_EQ(run("eval --split test --data " + data() + " --checkpoint " + (o1 / "final.ckpt").string()).code, 2);
  EXPECT_EQ(run("eval --data " + data() + " --checkpoint " + (root_ / "none.ckpt").string()).code, 1);

  const auto val = slurp(fs::path(data()) / "val.jsonl");
  const auto id_at = val.find("\"id\":");
  ASSERT_NE(id_at, std::string::npos);
  const auto id = std::stoull(val.substr(id_at + 5));
  const auto maps = root_ / "maps";
  const auto at = run("attn --data " + data() + " --checkpoint " + (o1 / "final.ckpt").string() + " --sample " +
                      std::to_string(id) + " --out " + maps.string());
  ASSERT_EQ(at.code, 0) << at.out;
  EXPECT_TRUE(fs::exists(maps / "visual_glimpse0.pgm"));
  EXPECT_EQ(slurp(maps / "visual_glimpse0.pgm").rfind("P2", 0), 0u);
}

TEST_F(Cli, AblateWithOneSeed) {
  const auto table = root_ / "ablation.tsv";
  const auto r = run(tiny() + " ablate --seeds 1 --iters 2 --variants simple-conv,drau --data " + data() +
                     " --out " + table.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto tsv = slurp(table);
  EXPECT_NE(tsv.find("simple-conv\t"), std::string::npos);
  EXPECT_NE(tsv.find("drau\t"), std::string::npos);
  EXPECT_NE(tsv.find("±0.0000"), std::string::npos);
  EXPECT_NE(r.out.find(tsv), std::string::npos);
}

TEST_F(Cli, GradcheckPasses) {
  const auto r = run("gradcheck --seeds 1");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("0 of "), std::string::npos);
}
