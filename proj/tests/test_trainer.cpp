#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "relpred/errors.hpp"
#include "relpred/kg_data.hpp"
#include "relpred/metrics.hpp"
#include "relpred/model.hpp"
#include "relpred/tokenizer.hpp"
#include "relpred/trainer.hpp"
#include "support/synth_data.hpp"
#include "support/temp_dir.hpp"

using namespace relpred;
using relpred::testing::TempDir;

namespace {

struct Fixture {
  KnowledgeGraphDataset dataset;
  Vocabulary vocab = Vocabulary::train({}, 4);
  std::size_t pad_len = 12;

  static Fixture toy(std::size_t train = 60, std::size_t valid = 12,
                     std::size_t test = 12, std::uint64_t seed = 3) {
    TempDir dir("trainer");
    relpred::testing::write_toy_dataset(dir.path(), train, valid, test, seed);
    Fixture f;
    f.dataset = build_dataset(dir.file("train.txt"), dir.file("valid.txt"),
                              dir.file("test.txt"), dir.file("names.txt"));
    f.vocab = Vocabulary::train(f.dataset.names, 600);
    return f;
  }

  ModelConfig model_config(std::uint64_t seed = 5) const {
    ModelConfig config;
    config.vocab_size = static_cast<std::uint32_t>(vocab.size());
    config.pad_len = static_cast<std::uint32_t>(pad_len);
    config.embed_dim = 16;
    config.num_layers = 1;
    config.num_heads = 2;
    config.feedforward_dim = 32;
    config.num_relations =
        static_cast<std::uint32_t>(dataset.relations.size());
    config.seed = seed;
    return config;
  }
};

TrainConfig quick_config(int epochs, double lr) {
  TrainConfig config;
  config.epochs = epochs;
  config.learning_rate = lr;
  config.weight_decay = 0.0;
  config.batch_size = 16;
  config.shuffle_seed = 11;
  config.threads = 1;
  return config;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig config;
  config.epochs = 0;
  CHECK_THROWS_AS(validate_train_config(config), ConfigError);
  config = TrainConfig{};
  config.batch_size = 0;
  CHECK_THROWS_AS(validate_train_config(config), ConfigError);
  config = TrainConfig{};
  config.weight_decay = 1.0;
  CHECK_THROWS_AS(validate_train_config(config), ConfigError);
  config = TrainConfig{};
  config.learning_rate = -1e-9;
  CHECK_THROWS_AS(validate_train_config(config), ConfigError);
  CHECK_NOTHROW(validate_train_config(TrainConfig{}));
}

TEST_CASE("adam leaves parameters alone on zero gradients without decay") {
  std::vector<double> params{0.5, -0.25, 3.0};
  const std::vector<double> before = params;
  std::vector<double> grads{0.0, 0.0, 0.0};
  AdamState moments;
  TrainConfig config;
  config.learning_rate = 0.1;
  config.weight_decay = 0.0;
  config.threads = 1;
  adam_step(params, grads, moments, 1, config);
  CHECK(params == before);
}

TEST_CASE("the first adam step moves by about the learning rate") {
  std::vector<double> params{0.0};
  std::vector<double> grads{1.0};
  AdamState moments;
  TrainConfig config;
  config.learning_rate = 0.1;
  config.weight_decay = 0.0;
  config.threads = 1;
  adam_step(params, grads, moments, 1, config);
  // mhat = vhat = 1 at t=1, so the update is lr / (1 + eps).
  CHECK(params[0] == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("decay-only step scales parameters by (1 - lr*decay)") {
  std::vector<double> params{1.0, -2.0};
  std::vector<double> grads{0.0, 0.0};
  AdamState moments;
  TrainConfig config;
  config.learning_rate = 5e-5;
  config.weight_decay = 0.25;
  config.threads = 1;
  adam_step(params, grads, moments, 1, config);
  CHECK(params[0] == doctest::Approx(1.0 * (1.0 - 1.25e-5)).epsilon(1e-15));
  CHECK(params[1] == doctest::Approx(-2.0 * (1.0 - 1.25e-5)).epsilon(1e-15));
}

TEST_CASE("adam rejects shape mismatches") {
  std::vector<double> params{1.0};
  std::vector<double> grads{1.0, 2.0};
  AdamState moments;
  CHECK_THROWS_AS(adam_step(params, grads, moments, 1, TrainConfig{}),
                  Error);
}

TEST_CASE("a tiny dataset is memorized and ranks first") {
  TempDir dir("memo");
  dir.write("train.txt", "A\tlikes\tB\nB\thates\tA\n");
  dir.write("valid.txt", "A\tlikes\tB\n");
  dir.write("test.txt", "A\tlikes\tB\n");
  dir.write("names.txt", "A\talpha\nB\tbeta\n");
  Fixture f;
  f.dataset = build_dataset(dir.file("train.txt"), dir.file("valid.txt"),
                            dir.file("test.txt"), dir.file("names.txt"));
  f.vocab = Vocabulary::train(f.dataset.names, 40);
  ClassifierState state = init(f.model_config());

  TrainConfig config = quick_config(200, 0.02);
  config.batch_size = 2;
  const TrainReport report =
      train(f.dataset, state, config, f.vocab, f.pad_len);
  REQUIRE(report.epoch_train_loss.size() == 200);
  CHECK(report.epoch_train_loss.back() < 0.01);
  CHECK(report.epoch_train_loss.back() <
        report.epoch_train_loss.front());

  // The memorizing model is an oracle predictor on its own data.
  const EvalResult eval =
      evaluate(state, f.dataset, f.dataset.train, f.dataset.index, f.vocab,
               f.pad_len, EvalOptions{{1, 2}, TiePolicy::optimistic, 1});
  CHECK(eval.report.mean_rank == doctest::Approx(1.0));
  CHECK(eval.report.filtered_mean_rank == doctest::Approx(1.0));
  CHECK(eval.report.mrr == doctest::Approx(1.0));
  for (const HitsEntry& h : eval.report.hits) {
    CHECK(h.raw == doctest::Approx(1.0));
    CHECK(h.filtered == doctest::Approx(1.0));
  }
  // Validation over the memorized triple is near zero too.
  CHECK(validation_loss(f.dataset, state, f.vocab, f.pad_len, 1) < 0.05);
}

TEST_CASE("training is deterministic given seeds") {
  const Fixture f = Fixture::toy();
  TrainConfig config = quick_config(2, 1e-3);
  ClassifierState a = init(f.model_config());
  ClassifierState b = init(f.model_config());
  const TrainReport ra = train(f.dataset, a, config, f.vocab, f.pad_len);
  const TrainReport rb = train(f.dataset, b, config, f.vocab, f.pad_len);
  CHECK(a.params == b.params);
  CHECK(ra.epoch_train_loss == rb.epoch_train_loss);
  REQUIRE(ra.validation_loss.size() == rb.validation_loss.size());
  for (std::size_t i = 0; i < ra.validation_loss.size(); ++i) {
    CHECK(ra.validation_loss[i].second == rb.validation_loss[i].second);
  }
}

TEST_CASE("zero learning rate and zero decay is a bitwise no-op") {
  const Fixture f = Fixture::toy(40, 8, 8);
  TrainConfig config = quick_config(2, 0.0);
  config.weight_decay = 0.0;
  ClassifierState state = init(f.model_config());
  const std::vector<double> before = state.params;
  train(f.dataset, state, config, f.vocab, f.pad_len);
  CHECK(state.params == before);
}

TEST_CASE("losses stay finite on a toy run with defaults") {
  const Fixture f = Fixture::toy(100, 10, 10);
  TrainConfig config;  // stock defaults: lr 5e-5, decay 0.25
  config.epochs = 2;
  config.shuffle_seed = 5;
  config.threads = 1;
  ClassifierState state = init(f.model_config());
  const TrainReport report =
      train(f.dataset, state, config, f.vocab, f.pad_len);
  for (double loss : report.epoch_train_loss) {
    CHECK(std::isfinite(loss));
  }
  for (const auto& [step, loss] : report.validation_loss) {
    CHECK(std::isfinite(loss));
  }
}

TEST_CASE("validation loss of an untrained model is near ln R") {
  const Fixture f = Fixture::toy(60, 40, 10);
  const ClassifierState state = init(f.model_config());
  const double expected =
      std::log(static_cast<double>(f.dataset.relations.size()));
  const double measured =
      validation_loss(f.dataset, state, f.vocab, f.pad_len, 1);
  CHECK(measured > 0.8 * expected);
  CHECK(measured < 1.2 * expected);
  CHECK(validation_loss(f.dataset, state, f.vocab, f.pad_len, 1) == measured);
}

TEST_CASE("validation loss requires a validation split") {
  TempDir dir("noval");
  dir.write("train.txt", "A\tr\tB\n");
  dir.write("empty.txt", "");
  dir.write("names.txt", "A\ta\nB\tb\n");
  Fixture f;
  f.dataset = build_dataset(dir.file("train.txt"), dir.file("empty.txt"),
                            dir.file("empty.txt"), dir.file("names.txt"));
  f.vocab = Vocabulary::train(f.dataset.names, 20);
  const ClassifierState state = init(f.model_config());
  CHECK_THROWS_AS(validation_loss(f.dataset, state, f.vocab, f.pad_len, 1),
                  DataError);
}

TEST_CASE("non-finite loss aborts with the failing step") {
  const Fixture f = Fixture::toy(40, 8, 8);
  ClassifierState state = init(f.model_config());
  state.params[0] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig config = quick_config(1, 1e-3);
  CHECK_THROWS_WITH_AS(train(f.dataset, state, config, f.vocab, f.pad_len),
                       doctest::Contains("step 1"), TrainingError);
}

TEST_CASE("eval_every produces mid-epoch validation entries") {
  const Fixture f = Fixture::toy(64, 8, 8);
  TrainConfig config = quick_config(1, 1e-3);
  config.batch_size = 8;  // 8 steps per epoch
  config.eval_every = 3;
  ClassifierState state = init(f.model_config());
  const TrainReport report =
      train(f.dataset, state, config, f.vocab, f.pad_len);
  REQUIRE(report.validation_loss.size() >= 3);  // steps 3, 6 + epoch end
  CHECK(report.validation_loss[0].first == 3);
  CHECK(report.validation_loss[1].first == 6);
}

TEST_CASE("decay modes differ and both stay finite") {
  const Fixture f = Fixture::toy(48, 8, 8);
  TrainConfig weight_mode = quick_config(1, 1e-3);
  weight_mode.weight_decay = 0.25;
  TrainConfig lr_mode = weight_mode;
  lr_mode.decay_mode = DecayMode::lr;
  ClassifierState a = init(f.model_config());
  ClassifierState b = init(f.model_config());
  train(f.dataset, a, weight_mode, f.vocab, f.pad_len);
  train(f.dataset, b, lr_mode, f.vocab, f.pad_len);
  CHECK(a.params != b.params);
}

TEST_CASE("multi-label targets converge to the split distribution") {
  // One pair, two relations: the optimum is p = (1/2, 1/2), where the
  // multi-hot loss is 2 ln 2 and the per-triple one-hot loss is ln 2.
  TempDir dir("multi");
  dir.write("train.txt", "A\tr1\tB\nA\tr2\tB\n");
  dir.write("valid.txt", "");
  dir.write("test.txt", "");
  dir.write("names.txt", "A\talpha\nB\tbeta\n");
  Fixture f;
  f.dataset = build_dataset(dir.file("train.txt"), dir.file("valid.txt"),
                            dir.file("test.txt"), dir.file("names.txt"));
  f.vocab = Vocabulary::train(f.dataset.names, 40);

  TrainConfig config = quick_config(300, 0.02);
  config.batch_size = 2;
  config.multi_label_targets = true;
  ClassifierState multi = init(f.model_config());
  const TrainReport multi_report =
      train(f.dataset, multi, config, f.vocab, f.pad_len);
  CHECK(multi_report.epoch_train_loss.back() ==
        doctest::Approx(2.0 * std::log(2.0)).epsilon(0.02));

  config.multi_label_targets = false;
  ClassifierState single = init(f.model_config());
  const TrainReport single_report =
      train(f.dataset, single, config, f.vocab, f.pad_len);
  CHECK(single_report.epoch_train_loss.back() ==
        doctest::Approx(std::log(2.0)).epsilon(0.02));
}

TEST_CASE("model and dataset shapes must agree") {
  const Fixture f = Fixture::toy(30, 6, 6);
  ModelConfig wrong = f.model_config();
  wrong.num_relations += 1;
  ClassifierState state = init(wrong);
  TrainConfig config = quick_config(1, 1e-3);
  CHECK_THROWS_AS(train(f.dataset, state, config, f.vocab, f.pad_len),
                  ConfigError);
}
