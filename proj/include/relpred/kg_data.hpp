#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace relpred {

// Dense indices into the dataset-wide vocabularies.
using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

// One directed fact. (head, r, tail) and (tail, r, head) are distinct.
struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  friend bool operator==(const Triple&, const Triple&) = default;
};

enum class SplitRole { training, validation, testing };

struct DatasetSplit {
  SplitRole role = SplitRole::training;
  std::vector<Triple> triples;
  // In-split duplicates are dropped on load; the count is kept for logging.
  std::size_t duplicates_dropped = 0;
};

// Insertion-ordered string <-> dense id map. IDs are assigned in
// first-appearance order, which makes reloads reproduce identical ids.
class StringVocab {
 public:
  std::uint32_t get_or_add(std::string_view key);
  std::optional<std::uint32_t> find(std::string_view key) const;
  const std::string& key(std::uint32_t id) const { return keys_[id]; }
  std::size_t size() const { return keys_.size(); }

  // A frozen vocab rejects unseen keys (used when loading against an
  // existing dataset's id space).
  void freeze() { frozen_ = true; }
  bool frozen() const { return frozen_; }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
  std::vector<std::string> keys_;
  bool frozen_ = false;
};

// Ordered (head, tail) -> set of relations observed across the indexed
// splits. Backs filtered evaluation and multi-label targets.
class PairRelationIndex {
 public:
  void add(EntityId head, RelationId relation, EntityId tail);
  // Sorted, deduplicated; empty for unseen pairs. Direction matters.
  std::span<const RelationId> valid_relations(EntityId head,
                                              EntityId tail) const;
  std::size_t pair_count() const { return pairs_.size(); }

 private:
  static std::uint64_t pair_key(EntityId head, EntityId tail) {
    return (static_cast<std::uint64_t>(head) << 32) | tail;
  }
  std::unordered_map<std::uint64_t, std::vector<RelationId>> pairs_;
};

struct KnowledgeGraphDataset {
  StringVocab entities;             // raw file keys (e.g. Freebase MIDs)
  std::vector<std::string> names;   // EntityId -> surface name, total
  StringVocab relations;
  DatasetSplit train;
  DatasetSplit valid;
  DatasetSplit test;
  PairRelationIndex index;          // spans train + valid + test

  const std::string& entity_name(EntityId id) const { return names[id]; }
  const DatasetSplit& split(SplitRole role) const;
};

struct LoadOptions {
  char delimiter = '\t';
  // Opt-in normalization for WordNet-style name tables.
  bool underscores_to_spaces = false;
};

// Reads a 3-column triple file, assigning ids through the shared vocabs.
// Throws DataError on malformed lines (with line number) and on unseen keys
// when a vocab is frozen.
DatasetSplit load_triples(const std::filesystem::path& path, SplitRole role,
                          StringVocab& entities, StringVocab& relations,
                          const LoadOptions& options = {});

// Loads all three splits plus the 2-column names table and builds the
// pair->relations index over their union. Throws DataError when any split
// entity has no name entry.
KnowledgeGraphDataset build_dataset(const std::filesystem::path& train_path,
                                    const std::filesystem::path& valid_path,
                                    const std::filesystem::path& test_path,
                                    const std::filesystem::path& names_path,
                                    const LoadOptions& options = {});

inline std::span<const RelationId> valid_relations(
    const PairRelationIndex& index, EntityId head, EntityId tail) {
  return index.valid_relations(head, tail);
}

struct DatasetStats {
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
  std::size_t entities = 0;
  std::size_t relations = 0;

  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats dataset_stats(const KnowledgeGraphDataset& dataset);
std::string stats_json(const DatasetStats& stats);
std::string stats_table(const DatasetStats& stats);

}  // namespace relpred
