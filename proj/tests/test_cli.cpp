#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "relpred/cli.hpp"
#include "relpred/model.hpp"
#include "relpred/run_config.hpp"
#include "relpred/tokenizer.hpp"
#include "support/synth_data.hpp"
#include "support/temp_dir.hpp"

using namespace relpred;
using relpred::testing::TempDir;

namespace {

int run(std::vector<std::string> args) {
  std::vector<const char*> argv{"relpred"};
  for (const std::string& a : args) {
    argv.push_back(a.c_str());
  }
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Toy dataset + config pointing at it, rigged small enough for fast runs.
struct CliFixture {
  TempDir dir{"cli"};
  std::filesystem::path config_path;

  explicit CliFixture(std::size_t train = 80, std::size_t valid = 12,
                      std::size_t test = 12) {
    relpred::testing::write_toy_dataset(dir.path(), train, valid, test, 21);
    std::ostringstream config;
    config << "[data]\n"
           << "train = " << dir.file("train.txt").string() << "\n"
           << "valid = " << dir.file("valid.txt").string() << "\n"
           << "test = " << dir.file("test.txt").string() << "\n"
           << "names = " << dir.file("names.txt").string() << "\n"
           << "[tokenizer]\nmax_size = 600\npad_len = 12\n"
           << "[model]\nembed_dim = 16\nnum_layers = 1\nnum_heads = 2\n"
           << "feedforward_dim = 32\ndropout = 0\n"
           << "[train]\nlearning_rate = 0.002\nweight_decay = 0\n"
           << "epochs = 2\nbatch_size = 16\nthreads = 1\n"
           << "[run]\nseed = 12\nout = " << out().string() << "\n";
    config_path = dir.write("run.ini", config.str());
  }

  std::filesystem::path out(const std::string& tag = "out") const {
    return dir.file(tag);
  }
  std::string cfg() const { return config_path.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run({}) == 1);
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({"stats"}) == 1);  // --config missing
  CHECK(run({"--config", "/nonexistent.ini", "stats"}) == 1);
}

TEST_CASE("stats writes the table and json without touching inputs") {
  CliFixture f;
  const std::string train_before = slurp(f.dir.file("train.txt"));
  const std::string names_before = slurp(f.dir.file("names.txt"));
  CHECK(run({"--config", f.cfg(), "stats"}) == 0);
  const std::string json = slurp(f.out() / "stats.json");
  CHECK(json.find("\"train\": 80") != std::string::npos);
  CHECK(json.find("\"relations\": 6") != std::string::npos);
  CHECK(std::filesystem::exists(f.out() / "config.ini"));
  CHECK(slurp(f.dir.file("train.txt")) == train_before);
  CHECK(slurp(f.dir.file("names.txt")) == names_before);
}

TEST_CASE("stats on a missing file fails with a data-ish exit") {
  CliFixture f;
  std::filesystem::remove(f.dir.file("test.txt"));
  CHECK(run({"--config", f.cfg(), "stats"}) != 0);
}

TEST_CASE("train produces a checkpoint, vocabulary and report") {
  CliFixture f;
  REQUIRE(run({"--config", f.cfg(), "train"}) == 0);
  CHECK(std::filesystem::exists(f.out() / "model.ckpt"));
  CHECK(std::filesystem::exists(f.out() / "vocab.json"));
  const std::string report = slurp(f.out() / "train_report.jsonl");
  std::size_t epochs = 0;
  std::istringstream lines(report);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find("\"type\":\"epoch\"") != std::string::npos) {
      ++epochs;
    }
  }
  CHECK(epochs == 2);
}

TEST_CASE("training twice with one seed is byte-identical") {
  CliFixture f;
  REQUIRE(run({"--config", f.cfg(), "--out", f.out("a").string(), "train"}) ==
          0);
  REQUIRE(run({"--config", f.cfg(), "--out", f.out("b").string(), "train"}) ==
          0);
  CHECK(slurp(f.out("a") / "train_report.jsonl") ==
        slurp(f.out("b") / "train_report.jsonl"));
  CHECK(slurp(f.out("a") / "model.ckpt") == slurp(f.out("b") / "model.ckpt"));
}

TEST_CASE("lr 0 and decay 0 leaves the initial parameters") {
  CliFixture f;
  REQUIRE(run({"--config", f.cfg(), "--set", "train.learning_rate=0",
               "--set", "train.weight_decay=0", "train"}) == 0);
  const ClassifierState trained = load(f.out() / "model.ckpt");
  const ClassifierState fresh = init(trained.config);
  CHECK(trained.params == fresh.params);
}

TEST_CASE("evaluate emits the metric artifacts and is idempotent") {
  CliFixture f;
  REQUIRE(run({"--config", f.cfg(), "train"}) == 0);
  REQUIRE(run({"--config", f.cfg(), "evaluate"}) == 0);
  const std::string first = slurp(f.out() / "metrics.json");
  for (const char* key : {"\"mean_rank\"", "\"filtered_mean_rank\"",
                          "\"mrr\"", "\"filtered_mrr\"", "\"hits1\"",
                          "\"filtered_hits1\"", "\"hits5\"",
                          "\"filtered_hits5\""}) {
    CAPTURE(key);
    CHECK(first.find(key) != std::string::npos);
  }
  CHECK(std::filesystem::exists(f.out() / "ranks.csv"));
  REQUIRE(run({"--config", f.cfg(), "evaluate"}) == 0);
  CHECK(slurp(f.out() / "metrics.json") == first);
}

TEST_CASE("evaluate rejects a checkpoint from another dataset") {
  CliFixture small(80, 12, 12);
  REQUIRE(run({"--config", small.cfg(), "train"}) == 0);

  // Same model file, different dataset with a different relation count.
  TempDir other("cliother");
  {
    std::ofstream train(other.file("train.txt"));
    for (int i = 0; i < 12; ++i) {
      train << "e" << i << "\tr" << i % 9 << "\te" << (i + 1) % 12 << "\n";
    }
    std::ofstream names(other.file("names.txt"));
    for (int i = 0; i < 12; ++i) {
      names << "e" << i << "\tentity " << i << "\n";
    }
    std::ofstream(other.file("valid.txt")) << "e0\tr0\te1\n";
    std::ofstream(other.file("test.txt")) << "e1\tr1\te2\n";
  }
  std::ostringstream config;
  config << "[data]\n"
         << "train = " << other.file("train.txt").string() << "\n"
         << "valid = " << other.file("valid.txt").string() << "\n"
         << "test = " << other.file("test.txt").string() << "\n"
         << "names = " << other.file("names.txt").string() << "\n"
         << "[tokenizer]\nmax_size = 600\npad_len = 12\n"
         << "[run]\nseed = 12\nout = " << other.file("out").string() << "\n";
  const auto other_cfg = other.write("run.ini", config.str());
  // Reuse the first fixture's vocab and checkpoint against the new data.
  const int rc = run({"--config", other_cfg.string(), "--set",
                      "tokenizer.vocab=" + (small.out() / "vocab.json").string(),
                      "evaluate", "--checkpoint",
                      (small.out() / "model.ckpt").string()});
  CHECK(rc == 3);
}

TEST_CASE("inductive generates, verifies and persists") {
  CliFixture f(400, 60, 60);
  REQUIRE(run({"--config", f.cfg(), "inductive"}) == 0);
  for (const char* name :
       {"train.txt", "valid.txt", "test.txt", "provenance.json"}) {
    CHECK(std::filesystem::exists(f.out() / "inductive" / name));
  }
  const std::string first = slurp(f.out() / "inductive" / "test.txt");
  REQUIRE(run({"--config", f.cfg(), "--out", f.out("i2").string(),
               "inductive"}) == 0);
  CHECK(slurp(f.out("i2") / "inductive" / "test.txt") == first);

  CHECK(run({"--config", f.cfg(), "inductive", "--fraction", "0"}) == 1);
}

TEST_CASE("failures prints the top-k table") {
  CliFixture f;
  REQUIRE(run({"--config", f.cfg(), "train"}) == 0);
  REQUIRE(run({"--config", f.cfg(), "failures", "-k", "3"}) == 0);
  const std::string csv = slurp(f.out() / "failures.csv");
  std::size_t rows = 0;
  std::istringstream lines(csv);
  std::string line;
  while (std::getline(lines, line)) {
    ++rows;
  }
  CHECK(rows == 4);  // header + 3
  CHECK(run({"--config", f.cfg(), "failures", "-k", "0"}) == 1);
  REQUIRE(run({"--config", f.cfg(), "failures", "-k", "999"}) == 0);
  CHECK(!slurp(f.out() / "failures.csv").empty());
}

TEST_CASE("config overrides respect precedence") {
  CliFixture f;
  // --set overrides the file; --seed overrides [run] seed.
  REQUIRE(run({"--config", f.cfg(), "--seed", "99", "--set",
               "train.epochs=1", "train"}) == 0);
  const std::string snapshot = slurp(f.out() / "config.ini");
  CHECK(snapshot.find("seed = 99") != std::string::npos);
  CHECK(snapshot.find("epochs = 1") != std::string::npos);
  CHECK(run({"--config", f.cfg(), "--set", "bogus.key=1", "train"}) == 1);
}
