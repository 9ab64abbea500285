#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relpred/trainer.hpp"

namespace relpred {

// One experiment, fully described. Parsed from a sectioned key=value file;
// command-line flags override individual keys.
struct RunConfig {
  // [data]
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  std::string names_path;
  bool underscores_to_spaces = false;

  // [tokenizer]
  std::size_t vocab_max_size = 8000;
  std::size_t pad_len = 50;
  std::string vocab_path;  // optional pre-trained vocabulary to load

  // [model]
  std::uint32_t embed_dim = 64;
  std::uint32_t num_layers = 2;
  std::uint32_t num_heads = 4;
  std::uint32_t feedforward_dim = 256;
  double dropout = 0.0;

  // [train]
  TrainConfig train;

  // [eval]
  std::vector<int> hits_levels{1, 5};
  std::string tie_policy = "optimistic";

  // [inductive]
  double fraction = 0.10;

  // [run]
  std::uint64_t seed = 42;
  std::string out_dir = "out";
};

// Parses the config file; unknown keys are an error so typos fail loudly.
RunConfig load_run_config(const std::filesystem::path& path);

// Applies one "section.key=value" override (the CLI's --set flag).
void apply_override(RunConfig& config, const std::string& assignment);

// Effective configuration in the same file format (the run snapshot).
std::string config_snapshot(const RunConfig& config);

}  // namespace relpred
