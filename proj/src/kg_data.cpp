#include "relpred/kg_data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "relpred/errors.hpp"

namespace relpred {

std::uint32_t StringVocab::get_or_add(std::string_view key) {
  if (auto it = ids_.find(std::string(key)); it != ids_.end()) {
    return it->second;
  }
  if (frozen_) {
    throw DataError("vocabulary is frozen and has no entry for key '" +
                    std::string(key) + "'");
  }
  const auto id = static_cast<std::uint32_t>(keys_.size());
  keys_.emplace_back(key);
  ids_.emplace(keys_.back(), id);
  return id;
}

std::optional<std::uint32_t> StringVocab::find(std::string_view key) const {
  if (auto it = ids_.find(std::string(key)); it != ids_.end()) {
    return it->second;
  }
  return std::nullopt;
}

void PairRelationIndex::add(EntityId head, RelationId relation,
                            EntityId tail) {
  auto& set = pairs_[pair_key(head, tail)];
  auto it = std::lower_bound(set.begin(), set.end(), relation);
  if (it == set.end() || *it != relation) {
    set.insert(it, relation);
  }
}

std::span<const RelationId> PairRelationIndex::valid_relations(
    EntityId head, EntityId tail) const {
  auto it = pairs_.find(pair_key(head, tail));
  if (it == pairs_.end()) {
    return {};
  }
  return it->second;
}

const DatasetSplit& KnowledgeGraphDataset::split(SplitRole role) const {
  switch (role) {
    case SplitRole::training:
      return train;
    case SplitRole::validation:
      return valid;
    default:
      return test;
  }
}

namespace {

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open file: " + path.string());
  }
  return in;
}

// Packs a triple into one word for duplicate detection. Ids stay well below
// 2^21 for the supported benchmarks; fall back to a set of Triple otherwise.
struct TripleSet {
  std::unordered_map<std::uint64_t, std::vector<Triple>> buckets;

  bool insert(const Triple& t) {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(t.head) << 42) ^
        (static_cast<std::uint64_t>(t.tail) << 21) ^ t.relation;
    auto& bucket = buckets[key];
    if (std::find(bucket.begin(), bucket.end(), t) != bucket.end()) {
      return false;
    }
    bucket.push_back(t);
    return true;
  }
};

}  // namespace

DatasetSplit load_triples(const std::filesystem::path& path, SplitRole role,
                          StringVocab& entities, StringVocab& relations,
                          const LoadOptions& options) {
  std::ifstream in = open_or_throw(path);
  DatasetSplit split;
  split.role = role;
  TripleSet seen;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto first = line.find(options.delimiter);
    const auto second =
        first == std::string::npos ? first : line.find(options.delimiter, first + 1);
    const auto third =
        second == std::string::npos ? second : line.find(options.delimiter, second + 1);
    if (first == std::string::npos || second == std::string::npos ||
        third != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_number) +
                      ": expected 3 tab-separated fields");
    }
    const std::string_view view(line);
    Triple triple{
        entities.get_or_add(view.substr(0, first)),
        relations.get_or_add(view.substr(first + 1, second - first - 1)),
        entities.get_or_add(view.substr(second + 1)),
    };
    if (seen.insert(triple)) {
      split.triples.push_back(triple);
    } else {
      ++split.duplicates_dropped;
    }
  }
  return split;
}

namespace {

std::unordered_map<std::string, std::string> load_name_table(
    const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in = open_or_throw(path);
  std::unordered_map<std::string, std::string> table;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    strip_cr(line);
    if (line.empty()) {
      continue;
    }
    const auto sep = line.find(options.delimiter);
    if (sep == std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_number) +
                      ": expected 2 tab-separated fields");
    }
    std::string name = line.substr(sep + 1);
    if (options.underscores_to_spaces) {
      std::replace(name.begin(), name.end(), '_', ' ');
    }
    table[line.substr(0, sep)] = std::move(name);
  }
  return table;
}

}  // namespace

KnowledgeGraphDataset build_dataset(const std::filesystem::path& train_path,
                                    const std::filesystem::path& valid_path,
                                    const std::filesystem::path& test_path,
                                    const std::filesystem::path& names_path,
                                    const LoadOptions& options) {
  KnowledgeGraphDataset dataset;
  dataset.train = load_triples(train_path, SplitRole::training,
                               dataset.entities, dataset.relations, options);
  dataset.valid = load_triples(valid_path, SplitRole::validation,
                               dataset.entities, dataset.relations, options);
  dataset.test = load_triples(test_path, SplitRole::testing, dataset.entities,
                              dataset.relations, options);

  auto name_table = load_name_table(names_path, options);
  // The entity vocabulary is the union of split entities and the name
  // table's domain. Names-only keys are appended in file order so ids stay
  // deterministic (the hash map above loses order).
  {
    std::ifstream in = open_or_throw(names_path);
    std::string line;
    while (std::getline(in, line)) {
      strip_cr(line);
      if (line.empty()) {
        continue;
      }
      const auto sep = line.find(options.delimiter);
      dataset.entities.get_or_add(std::string_view(line).substr(0, sep));
    }
  }

  dataset.names.resize(dataset.entities.size());
  std::vector<std::string> missing;
  for (std::uint32_t id = 0; id < dataset.entities.size(); ++id) {
    auto it = name_table.find(dataset.entities.key(id));
    if (it == name_table.end()) {
      missing.push_back(dataset.entities.key(id));
    } else {
      dataset.names[id] = it->second;
    }
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << names_path.string() << ": no name entry for " << missing.size()
        << " entity key(s):";
    const std::size_t shown = std::min<std::size_t>(missing.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      msg << ' ' << missing[i];
    }
    if (missing.size() > shown) {
      msg << " ...";
    }
    throw DataError(msg.str());
  }

  for (const DatasetSplit* split :
       {&dataset.train, &dataset.valid, &dataset.test}) {
    for (const Triple& t : split->triples) {
      dataset.index.add(t.head, t.relation, t.tail);
    }
  }
  return dataset;
}

DatasetStats dataset_stats(const KnowledgeGraphDataset& dataset) {
  return DatasetStats{
      dataset.train.triples.size(), dataset.valid.triples.size(),
      dataset.test.triples.size(), dataset.entities.size(),
      dataset.relations.size(),
  };
}

std::string stats_json(const DatasetStats& stats) {
  nlohmann::ordered_json j;
  j["train"] = stats.train;
  j["valid"] = stats.valid;
  j["test"] = stats.test;
  j["entities"] = stats.entities;
  j["relations"] = stats.relations;
  return j.dump(2);
}

std::string stats_table(const DatasetStats& stats) {
  std::ostringstream out;
  const auto row = [&out](const char* label, std::size_t value) {
    out << label;
    for (std::size_t i = std::string(label).size(); i < 20; ++i) {
      out << ' ';
    }
    out << value << '\n';
  };
  row("training triples", stats.train);
  row("validation triples", stats.valid);
  row("testing triples", stats.test);
  row("entities", stats.entities);
  row("relations", stats.relations);
  return out.str();
}

}  // namespace relpred
