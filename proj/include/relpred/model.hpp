#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relpred/tokenizer.hpp"

namespace relpred {

// Shapes of every parameter tensor follow from this config.
struct ModelConfig {
  std::uint32_t vocab_size = 0;
  std::uint32_t pad_len = 0;
  std::uint32_t embed_dim = 0;
  std::uint32_t num_layers = 0;
  std::uint32_t num_heads = 0;
  std::uint32_t feedforward_dim = 0;
  std::uint32_t num_relations = 0;  // R
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate_config(const ModelConfig& config);  // throws ConfigError

// Offsets into the flat parameter vector. Canonical order: token embeddings,
// positional embeddings, per-layer tensors, classification head.
class ParamLayout {
 public:
  struct Layer {
    std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
    std::size_t ln1_g, ln1_b;
    std::size_t w1, b1, w2, b2;
    std::size_t ln2_g, ln2_b;
  };

  explicit ParamLayout(const ModelConfig& config);

  std::size_t tok_emb = 0;
  std::size_t pos_emb = 0;
  std::vector<Layer> layers;
  std::size_t head_w = 0;
  std::size_t head_b = 0;
  std::size_t total = 0;

  // Tensor name and in-tensor offset for a flat index (diagnostics).
  std::pair<std::string, std::size_t> locate(std::size_t flat_index) const;

 private:
  std::vector<std::pair<std::string, std::size_t>> tensor_starts_;
};

struct ClassifierState {
  ModelConfig config;
  std::vector<double> params;
};

using Logits = std::vector<double>;
// Binary relevance vector of length R with at least one positive.
using TargetVector = std::vector<std::uint8_t>;

// Deterministic initialization from config.seed.
ClassifierState init(const ModelConfig& config);

// Evaluation-mode forward (dropout off). Masked positions are never read:
// attention only runs over the real-token prefix and pooling reads [CLS].
Logits forward_one(const ClassifierState& state, const TokenizedSequence& seq);
std::vector<Logits> forward(const ClassifierState& state,
                            std::span<const TokenizedSequence> batch);

// Softmax with max subtraction; entries in (0,1), sum 1.
std::vector<double> probabilities(const Logits& logits);

// Categorical cross entropy summed over positive labels, computed as
// log-sum-exp minus the true logit per positive.
double loss(const Logits& logits, const TargetVector& target);

// Mean evaluation-mode loss over a batch (also the finite-difference path
// for gradient checking).
double batch_mean_loss(const ClassifierState& state,
                       std::span<const TokenizedSequence> batch,
                       std::span<const TargetVector> targets,
                       int threads = 1);

struct TrainingPass {
  bool training = false;
  std::uint64_t dropout_seed = 0;
  std::uint64_t step = 0;
};

// Mean batch loss plus analytic parameter gradients accumulated into grads
// (caller zeroes). Deterministic for a fixed thread count.
double batch_loss_and_gradients(const ClassifierState& state,
                                std::span<const TokenizedSequence> batch,
                                std::span<const TargetVector> targets,
                                std::span<double> grads,
                                const TrainingPass& pass = {},
                                int threads = 1);

// Binary checkpoint: magic, version byte, config header, raw parameters.
// Round-trips bit-exactly.
void save(const ClassifierState& state, const std::filesystem::path& path);
ClassifierState load(const std::filesystem::path& path);

// Throws CheckpointError naming the first mismatched field.
void check_checkpoint_matches(const ModelConfig& config,
                              std::size_t vocab_size,
                              std::size_t num_relations);

}  // namespace relpred
