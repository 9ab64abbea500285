#include "relpred/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "relpred/analysis.hpp"
#include "relpred/errors.hpp"
#include "relpred/kg_data.hpp"
#include "relpred/metrics.hpp"
#include "relpred/model.hpp"
#include "relpred/run_config.hpp"
#include "relpred/splits.hpp"
#include "relpred/tokenizer.hpp"
#include "relpred/trainer.hpp"

namespace relpred {

namespace {

namespace fs = std::filesystem;

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // --set section.key=value
  std::string out_override;
  std::uint64_t seed_override = 0;
  bool seed_set = false;
  bool quiet = false;
};

struct CommandContext {
  RunConfig config;
  bool quiet = false;

  void info(const std::string& message) const {
    if (!quiet) {
      std::cerr << message << '\n';
    }
  }
};

CommandContext make_context(const GlobalArgs& args) {
  if (args.config_path.empty()) {
    throw ConfigError("--config is required");
  }
  CommandContext ctx;
  ctx.config = load_run_config(args.config_path);
  for (const std::string& assignment : args.overrides) {
    apply_override(ctx.config, assignment);
  }
  if (!args.out_override.empty()) {
    ctx.config.out_dir = args.out_override;
  }
  if (args.seed_set) {
    ctx.config.seed = args.seed_override;
  }
  ctx.quiet = args.quiet;
  return ctx;
}

LoadOptions load_options(const RunConfig& config) {
  LoadOptions options;
  options.underscores_to_spaces = config.underscores_to_spaces;
  return options;
}

KnowledgeGraphDataset load_dataset(const CommandContext& ctx) {
  const RunConfig& c = ctx.config;
  for (const auto& [label, path] :
       {std::pair<const char*, const std::string&>{"data.train", c.train_path},
        {"data.valid", c.valid_path},
        {"data.test", c.test_path},
        {"data.names", c.names_path}}) {
    if (path.empty()) {
      throw ConfigError(std::string("config key ") + label + " is not set");
    }
    if (!fs::exists(path)) {
      throw ConfigError(std::string(label) + " path does not exist: " + path);
    }
  }
  KnowledgeGraphDataset dataset = build_dataset(
      c.train_path, c.valid_path, c.test_path, c.names_path, load_options(c));
  for (const DatasetSplit* split :
       {&dataset.train, &dataset.valid, &dataset.test}) {
    if (split->duplicates_dropped > 0) {
      ctx.info("dropped " + std::to_string(split->duplicates_dropped) +
               " duplicate triple(s) from one split");
    }
  }
  return dataset;
}

fs::path prepare_out_dir(const CommandContext& ctx) {
  const fs::path out(ctx.config.out_dir);
  fs::create_directories(out);
  std::ofstream snapshot(out / "config.ini");
  snapshot << config_snapshot(ctx.config);
  return out;
}

std::vector<std::string> names_corpus(const KnowledgeGraphDataset& dataset) {
  return dataset.names;
}

Vocabulary obtain_vocabulary(const CommandContext& ctx,
                             const KnowledgeGraphDataset& dataset,
                             const fs::path& out, bool allow_training) {
  const RunConfig& c = ctx.config;
  if (!c.vocab_path.empty()) {
    ctx.info("loading vocabulary from " + c.vocab_path);
    return Vocabulary::load(c.vocab_path);
  }
  const fs::path saved = out / "vocab.json";
  if (fs::exists(saved)) {
    ctx.info("loading vocabulary from " + saved.string());
    return Vocabulary::load(saved);
  }
  if (!allow_training) {
    throw ConfigError("no vocabulary found; set tokenizer.vocab or run train");
  }
  ctx.info("training vocabulary (max_size " +
           std::to_string(c.vocab_max_size) + ")");
  Vocabulary vocab = Vocabulary::train(names_corpus(dataset), c.vocab_max_size);
  vocab.save(saved);
  return vocab;
}

ModelConfig model_config(const RunConfig& c, std::size_t vocab_size,
                         std::size_t num_relations) {
  ModelConfig config;
  config.vocab_size = static_cast<std::uint32_t>(vocab_size);
  config.pad_len = static_cast<std::uint32_t>(c.pad_len);
  config.embed_dim = c.embed_dim;
  config.num_layers = c.num_layers;
  config.num_heads = c.num_heads;
  config.feedforward_dim = c.feedforward_dim;
  config.num_relations = static_cast<std::uint32_t>(num_relations);
  config.dropout_rate = c.dropout;
  config.seed = c.seed;
  return config;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig config = c.train;
  config.shuffle_seed = c.seed + 1;
  return config;
}

int cmd_stats(const CommandContext& ctx) {
  const KnowledgeGraphDataset dataset = load_dataset(ctx);
  const DatasetStats stats = dataset_stats(dataset);
  const fs::path out = prepare_out_dir(ctx);
  std::ofstream json(out / "stats.json");
  json << stats_json(stats) << '\n';
  std::cout << stats_table(dataset_stats(dataset));
  return 0;
}

int cmd_train(const CommandContext& ctx) {
  const KnowledgeGraphDataset dataset = load_dataset(ctx);
  const fs::path out = prepare_out_dir(ctx);
  const Vocabulary vocab =
      obtain_vocabulary(ctx, dataset, out, /*allow_training=*/true);
  ClassifierState state =
      init(model_config(ctx.config, vocab.size(), dataset.relations.size()));
  const fs::path checkpoint = out / "model.ckpt";
  TrainReport report;
  try {
    report = train(dataset, state, train_config(ctx.config), vocab,
                   ctx.config.pad_len);
  } catch (const TrainingError&) {
    // Parameters from before the failing step are still intact.
    save(state, checkpoint);
    ctx.info("training diverged; last good checkpoint kept at " +
             checkpoint.string());
    throw;
  }
  save(state, checkpoint);
  report.checkpoint_path = checkpoint.string();
  std::ofstream report_file(out / "train_report.jsonl");
  report_file << report_json_lines(report);
  if (!ctx.quiet) {
    std::cout << report_summary(report);
  }
  return 0;
}

struct LoadedModel {
  ClassifierState state;
  Vocabulary vocab;
};

LoadedModel load_model_for_eval(const CommandContext& ctx,
                                const KnowledgeGraphDataset& dataset,
                                const fs::path& out,
                                const std::string& checkpoint_flag) {
  Vocabulary vocab =
      obtain_vocabulary(ctx, dataset, out, /*allow_training=*/false);
  fs::path checkpoint = checkpoint_flag.empty()
                            ? out / "model.ckpt"
                            : fs::path(checkpoint_flag);
  ClassifierState state = load(checkpoint);
  check_checkpoint_matches(state.config, vocab.size(),
                           dataset.relations.size());
  if (state.config.pad_len != ctx.config.pad_len) {
    throw CheckpointError("checkpoint pad_len " +
                          std::to_string(state.config.pad_len) +
                          " does not match tokenizer.pad_len " +
                          std::to_string(ctx.config.pad_len));
  }
  return LoadedModel{std::move(state), std::move(vocab)};
}

EvalOptions eval_options(const RunConfig& c) {
  EvalOptions options;
  options.hits_levels = c.hits_levels;
  options.tie_policy = tie_policy_from_string(c.tie_policy);
  options.threads = c.train.threads;
  return options;
}

int cmd_evaluate(const CommandContext& ctx, const std::string& checkpoint) {
  const KnowledgeGraphDataset dataset = load_dataset(ctx);
  const fs::path out = prepare_out_dir(ctx);
  const LoadedModel model = load_model_for_eval(ctx, dataset, out, checkpoint);
  const EvalResult result =
      evaluate(model.state, dataset, dataset.test, dataset.index, model.vocab,
               ctx.config.pad_len, eval_options(ctx.config));
  std::ofstream json(out / "metrics.json");
  json << metrics_json(result.report) << '\n';
  write_rank_csv(out / "ranks.csv", result.records, dataset);
  std::cout << metrics_table(result.report);
  return 0;
}

int cmd_inductive(const CommandContext& ctx) {
  const KnowledgeGraphDataset dataset = load_dataset(ctx);
  const fs::path out = prepare_out_dir(ctx);
  InductiveSplit split =
      make_inductive(dataset, ctx.config.fraction, ctx.config.seed);
  split.provenance.source = ctx.config.train_path;
  const fs::path dir = out / "inductive";
  save_inductive(split, dataset, dir);
  const InductiveCheckReport report = verify_inductive(split);
  std::cout << inductive_report_text(report, dataset);
  ctx.info("inductive split written to " + dir.string());
  return report.passed() ? 0 : 2;
}

int cmd_failures(const CommandContext& ctx, const std::string& checkpoint,
                 std::size_t k, bool use_raw_rank) {
  if (k < 1) {
    throw ConfigError("-k must be >= 1");
  }
  const KnowledgeGraphDataset dataset = load_dataset(ctx);
  const fs::path out = prepare_out_dir(ctx);
  const LoadedModel model = load_model_for_eval(ctx, dataset, out, checkpoint);
  const EvalResult result =
      evaluate(model.state, dataset, dataset.test, dataset.index, model.vocab,
               ctx.config.pad_len, eval_options(ctx.config));
  const std::vector<FailureRow> rows =
      worst_predictions(result.records, dataset, k, use_raw_rank);
  write_failures_csv(out / "failures.csv", rows);
  std::cout << failures_table(rows);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"relation prediction over knowledge-graph entity names"};
  app.require_subcommand(1);

  GlobalArgs args;
  app.add_option("--config", args.config_path, "experiment config file")
      ->envname("RELPRED_CONFIG");
  app.add_option("--set", args.overrides,
                 "override a config key (section.key=value)");
  app.add_option("--out", args.out_override, "output directory override");
  auto* seed_opt =
      app.add_option("--seed", args.seed_override, "global seed override");
  app.add_flag("--quiet", args.quiet, "suppress informational logging");

  auto* stats = app.add_subcommand("stats", "dataset statistics");
  auto* train_cmd = app.add_subcommand("train", "train a classifier");
  auto* eval_cmd =
      app.add_subcommand("evaluate", "rank the test split with filtering");
  std::string checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file");
  auto* inductive = app.add_subcommand(
      "inductive", "generate and verify an entity-inductive split");
  double fraction = -1.0;
  inductive->add_option("--fraction", fraction, "test sample fraction");
  auto* failures =
      app.add_subcommand("failures", "worst-ranked test predictions");
  std::size_t k = 3;
  bool use_raw_rank = false;
  failures->add_option("-k,--top", k, "number of rows");
  failures->add_flag("--raw", use_raw_rank, "order by raw instead of filtered rank");
  failures->add_option("--checkpoint", checkpoint, "checkpoint file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  args.seed_set = seed_opt->count() > 0;

  try {
    CommandContext ctx = make_context(args);
    if (stats->parsed()) {
      return cmd_stats(ctx);
    }
    if (train_cmd->parsed()) {
      return cmd_train(ctx);
    }
    if (eval_cmd->parsed()) {
      return cmd_evaluate(ctx, checkpoint);
    }
    if (inductive->parsed()) {
      if (fraction >= 0.0) {
        ctx.config.fraction = fraction;
      }
      return cmd_inductive(ctx);
    }
    if (failures->parsed()) {
      return cmd_failures(ctx, checkpoint, k, use_raw_rank);
    }
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const MetricError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return 3;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace relpred
