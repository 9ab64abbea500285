#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "relpred/kg_data.hpp"

namespace relpred {

struct InductiveProvenance {
  std::string source;
  double fraction = 0.0;
  std::uint64_t seed = 0;
};

// Entity-inductive evaluation split: test entities never occur in train or
// valid, and valid entities never occur in train.
struct InductiveSplit {
  DatasetSplit train;
  DatasetSplit valid;
  DatasetSplit test;
  InductiveProvenance provenance;
};

// Samples floor(fraction * |test|) test triples without replacement, prunes
// every train/valid triple touching their entities, then prunes every train
// triple touching a surviving valid entity. Throws DataError when pruning
// empties train or valid (message carries survivor counts).
InductiveSplit make_inductive(const KnowledgeGraphDataset& dataset,
                              double fraction, std::uint64_t seed);

struct InductiveCheckReport {
  // Entities violating each disjointness condition; empty means pass.
  std::vector<EntityId> test_overlap;
  std::vector<EntityId> valid_overlap;
  // Relations of test triples never seen in the pruned training split.
  std::vector<RelationId> test_relations_unseen_in_train;

  bool passed() const { return test_overlap.empty() && valid_overlap.empty(); }
};

// Recomputes both entity-intersection conditions from scratch.
InductiveCheckReport verify_inductive(const InductiveSplit& split);

std::string inductive_report_text(const InductiveCheckReport& report,
                                  const KnowledgeGraphDataset& dataset);

// Three standard-format triple files plus a provenance sidecar.
void save_inductive(const InductiveSplit& split,
                    const KnowledgeGraphDataset& dataset,
                    const std::filesystem::path& directory);

}  // namespace relpred
