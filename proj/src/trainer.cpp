#include "relpred/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "relpred/errors.hpp"
#include "relpred/parallel.hpp"
#include "relpred/rng.hpp"

namespace relpred {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// Per-entity piece lists so names are tokenized once per run, not per epoch.
std::vector<std::vector<TokenId>> build_piece_cache(
    const KnowledgeGraphDataset& dataset, const Vocabulary& vocab) {
  std::vector<std::vector<TokenId>> pieces(dataset.entities.size());
  for (std::size_t id = 0; id < pieces.size(); ++id) {
    pieces[id] = name_pieces(dataset.names[id], vocab);
  }
  return pieces;
}

TargetVector one_hot(RelationId relation, std::size_t num_relations) {
  TargetVector target(num_relations, 0);
  target[relation] = 1;
  return target;
}

double global_norm(std::span<const double> grads, std::size_t threads) {
  std::vector<double> partial(threads, 0.0);
  parallel_chunks(grads.size(), threads,
                  [&](std::size_t chunk, std::size_t begin, std::size_t end) {
                    double acc = 0.0;
                    for (std::size_t i = begin; i < end; ++i) {
                      acc += grads[i] * grads[i];
                    }
                    partial[chunk] = acc;
                  });
  double total = 0.0;
  for (double v : partial) {
    total += v;
  }
  return std::sqrt(total);
}

}  // namespace

void validate_train_config(const TrainConfig& config) {
  // Zero is allowed so a no-op run can be verified end to end.
  if (config.learning_rate < 0.0) {
    throw ConfigError("learning_rate must be >= 0");
  }
  if (config.weight_decay < 0.0 || config.weight_decay >= 1.0) {
    throw ConfigError("weight_decay must be in [0, 1)");
  }
  if (config.epochs < 1) {
    throw ConfigError("epochs must be >= 1");
  }
  if (config.batch_size < 1) {
    throw ConfigError("batch_size must be >= 1");
  }
  if (config.eval_every < 0) {
    throw ConfigError("eval_every must be >= 0");
  }
  if (config.clip_norm < 0.0) {
    throw ConfigError("clip_norm must be >= 0");
  }
}

void adam_step(std::span<double> params, std::span<const double> grads,
               AdamState& moments, std::uint64_t step_index,
               const TrainConfig& config, double lr_override) {
  if (params.size() != grads.size()) {
    throw Error("internal: parameter/gradient size mismatch");
  }
  if (moments.m.empty()) {
    moments.m.assign(params.size(), 0.0);
    moments.v.assign(params.size(), 0.0);
  }
  if (moments.m.size() != params.size()) {
    throw Error("internal: moment/parameter size mismatch");
  }
  if (step_index < 1) {
    throw Error("internal: adam step_index must be >= 1");
  }
  const double lr = lr_override >= 0.0 ? lr_override : config.learning_rate;
  const double decay =
      config.decay_mode == DecayMode::weight ? config.weight_decay : 0.0;
  const double shrink = 1.0 - lr * decay;
  const double bias1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_index));
  const double bias2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_index));

  const std::size_t threads = resolve_threads(config.threads);
  parallel_chunks(params.size(), threads,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t i = begin; i < end; ++i) {
                      params[i] *= shrink;
                      const double g = grads[i];
                      moments.m[i] = kBeta1 * moments.m[i] + (1.0 - kBeta1) * g;
                      moments.v[i] =
                          kBeta2 * moments.v[i] + (1.0 - kBeta2) * g * g;
                      const double mhat = moments.m[i] / bias1;
                      const double vhat = moments.v[i] / bias2;
                      params[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
                    }
                  });
  moments.step = step_index;
}

double validation_loss(const KnowledgeGraphDataset& dataset,
                       const ClassifierState& state, const Vocabulary& vocab,
                       std::size_t pad_len, int threads) {
  if (dataset.valid.triples.empty()) {
    throw DataError("validation split is empty");
  }
  const auto pieces = build_piece_cache(dataset, vocab);
  const std::size_t count = dataset.valid.triples.size();
  std::vector<TokenizedSequence> batch(count);
  std::vector<TargetVector> targets(count);
  for (std::size_t i = 0; i < count; ++i) {
    const Triple& t = dataset.valid.triples[i];
    batch[i] = assemble_pair(pieces[t.head], pieces[t.tail], pad_len);
    targets[i] = one_hot(t.relation, state.config.num_relations);
  }
  return batch_mean_loss(state, batch, targets,
                         static_cast<int>(resolve_threads(threads)));
}

TrainReport train(const KnowledgeGraphDataset& dataset, ClassifierState& state,
                  const TrainConfig& config, const Vocabulary& vocab,
                  std::size_t pad_len) {
  validate_train_config(config);
  if (state.config.num_relations != dataset.relations.size()) {
    throw ConfigError("model num_relations " +
                      std::to_string(state.config.num_relations) +
                      " does not match dataset relations " +
                      std::to_string(dataset.relations.size()));
  }
  if (state.config.pad_len != pad_len) {
    throw ConfigError("model pad_len does not match requested pad_len");
  }
  if (vocab.size() > state.config.vocab_size) {
    throw ConfigError("tokenizer vocabulary exceeds model vocab_size");
  }
  if (dataset.train.triples.empty()) {
    throw DataError("training split is empty");
  }

  const auto pieces = build_piece_cache(dataset, vocab);
  const std::size_t train_size = dataset.train.triples.size();
  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  const std::uint64_t steps_per_epoch =
      (train_size + batch_size - 1) / batch_size;
  const std::uint64_t total_steps =
      steps_per_epoch * static_cast<std::uint64_t>(config.epochs);
  const int threads = static_cast<int>(resolve_threads(config.threads));

  // Optional multi-hot mode: positives are all relations seen for the pair
  // within the training split itself.
  PairRelationIndex train_index;
  if (config.multi_label_targets) {
    for (const Triple& t : dataset.train.triples) {
      train_index.add(t.head, t.relation, t.tail);
    }
  }

  const ParamLayout layout(state.config);
  std::vector<double> grads(layout.total, 0.0);
  AdamState adam;
  TrainReport report;

  std::vector<std::size_t> order(train_size);
  std::iota(order.begin(), order.end(), 0);
  std::vector<TokenizedSequence> batch;
  std::vector<TargetVector> targets;

  std::uint64_t step = 0;
  const bool has_validation = !dataset.valid.triples.empty();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    Rng shuffle_rng(Rng::mix(config.shuffle_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    std::uint64_t batches = 0;
    for (std::size_t start = 0; start < train_size; start += batch_size) {
      const std::size_t end = std::min(start + batch_size, train_size);
      batch.resize(end - start);
      targets.resize(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Triple& t = dataset.train.triples[order[i]];
        batch[i - start] = assemble_pair(pieces[t.head], pieces[t.tail], pad_len);
        if (config.multi_label_targets) {
          TargetVector target(state.config.num_relations, 0);
          for (RelationId r : train_index.valid_relations(t.head, t.tail)) {
            target[r] = 1;
          }
          targets[i - start] = std::move(target);
        } else {
          targets[i - start] = one_hot(t.relation, state.config.num_relations);
        }
      }

      ++step;
      std::fill(grads.begin(), grads.end(), 0.0);
      TrainingPass pass;
      pass.training = true;
      pass.dropout_seed = Rng::mix(config.shuffle_seed, 0x6472u);  // "dr"
      pass.step = step;
      const double loss =
          batch_loss_and_gradients(state, batch, targets, grads, pass, threads);
      if (!std::isfinite(loss)) {
        throw TrainingError("training diverged: non-finite loss at step " +
                            std::to_string(step));
      }

      if (config.clip_norm > 0.0) {
        const double norm = global_norm(grads, resolve_threads(config.threads));
        if (norm > config.clip_norm) {
          const double scale = config.clip_norm / norm;
          for (double& g : grads) {
            g *= scale;
          }
        }
      }

      double lr = config.learning_rate;
      if (config.decay_mode == DecayMode::lr && total_steps > 1) {
        const double progress =
            static_cast<double>(step - 1) / static_cast<double>(total_steps - 1);
        lr = config.learning_rate * (1.0 - 0.25 * progress);
      }
      adam_step(state.params, grads, adam, step, config, lr);

      loss_sum += loss;
      ++batches;
      if (config.eval_every > 0 && has_validation &&
          step % static_cast<std::uint64_t>(config.eval_every) == 0) {
        report.validation_loss.emplace_back(
            step, validation_loss(dataset, state, vocab, pad_len,
                                  config.threads));
      }
    }

    report.epoch_train_loss.push_back(loss_sum /
                                      static_cast<double>(batches));
    if (has_validation) {
      report.validation_loss.emplace_back(
          step,
          validation_loss(dataset, state, vocab, pad_len, config.threads));
    }
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                      epoch_start)
            .count());
  }
  report.total_steps = step;
  return report;
}

std::string report_json_lines(const TrainReport& report) {
  std::ostringstream out;
  for (std::size_t e = 0; e < report.epoch_train_loss.size(); ++e) {
    nlohmann::ordered_json j;
    j["type"] = "epoch";
    j["epoch"] = e + 1;
    j["train_loss"] = report.epoch_train_loss[e];
    out << j.dump() << '\n';
  }
  for (const auto& [step, loss] : report.validation_loss) {
    nlohmann::ordered_json j;
    j["type"] = "validation";
    j["step"] = step;
    j["loss"] = loss;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string report_summary(const TrainReport& report) {
  std::ostringstream out;
  for (std::size_t e = 0; e < report.epoch_train_loss.size(); ++e) {
    out << "epoch " << (e + 1) << ": train loss "
        << report.epoch_train_loss[e];
    if (e < report.epoch_seconds.size()) {
      out << " (" << report.epoch_seconds[e] << " s)";
    }
    out << '\n';
  }
  if (!report.validation_loss.empty()) {
    out << "final validation loss " << report.validation_loss.back().second
        << '\n';
  }
  out << "total optimizer steps " << report.total_steps << '\n';
  if (!report.checkpoint_path.empty()) {
    out << "checkpoint " << report.checkpoint_path << '\n';
  }
  return out.str();
}

}  // namespace relpred
