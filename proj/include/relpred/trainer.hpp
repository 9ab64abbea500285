#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relpred/kg_data.hpp"
#include "relpred/model.hpp"
#include "relpred/tokenizer.hpp"

namespace relpred {

enum class DecayMode {
  weight,  // decoupled weight decay (default reading of "decay is 25%")
  lr,      // linear learning-rate decay to 75% of the initial rate
};

struct TrainConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.25;
  DecayMode decay_mode = DecayMode::weight;
  int epochs = 10;
  int batch_size = 32;
  std::uint64_t shuffle_seed = 0;
  int eval_every = 0;      // optimizer steps between validation runs; 0 = off
  double clip_norm = 1.0;  // global-norm gradient clipping; 0 disables
  bool multi_label_targets = false;  // merge duplicate (h,t) pairs
  int threads = 0;                   // 0 = hardware concurrency
};

void validate_train_config(const TrainConfig& config);  // throws ConfigError

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;  // completed steps
};

// One AdamW step (beta1 0.9, beta2 0.999, eps 1e-8, bias correction).
// Decoupled decay scales params by (1 - lr*weight_decay) before the update.
// step_index is 1-based.
void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& moments, std::uint64_t step_index,
               const TrainConfig& config, double lr_override = -1.0);

struct TrainReport {
  std::vector<double> epoch_train_loss;
  // (optimizer step, loss); epoch-end entries use the step reached so far.
  std::vector<std::pair<std::uint64_t, double>> validation_loss;
  std::vector<double> epoch_seconds;
  std::uint64_t total_steps = 0;
  std::string checkpoint_path;  // filled in by the caller that saves
};

std::string report_json_lines(const TrainReport& report);
std::string report_summary(const TrainReport& report);

// Mean evaluation-mode loss over the validation split.
double validation_loss(const KnowledgeGraphDataset& dataset,
                       const ClassifierState& state, const Vocabulary& vocab,
                       std::size_t pad_len, int threads = 0);

// Supervised loop over training triples: shuffled batches, cross-entropy
// against each triple's relation (no negative sampling), AdamW updates.
// Mutates state in place and returns the report. Throws TrainingError with
// the step index when the loss stops being finite.
TrainReport train(const KnowledgeGraphDataset& dataset, ClassifierState& state,
                  const TrainConfig& config, const Vocabulary& vocab,
                  std::size_t pad_len);

}  // namespace relpred
