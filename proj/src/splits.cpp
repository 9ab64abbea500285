#include "relpred/splits.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "relpred/errors.hpp"
#include "relpred/rng.hpp"

namespace relpred {

namespace {

std::unordered_set<EntityId> entity_set(const std::vector<Triple>& triples) {
  std::unordered_set<EntityId> entities;
  entities.reserve(triples.size() * 2);
  for (const Triple& t : triples) {
    entities.insert(t.head);
    entities.insert(t.tail);
  }
  return entities;
}

std::vector<Triple> drop_touching(const std::vector<Triple>& triples,
                                  const std::unordered_set<EntityId>& held) {
  std::vector<Triple> kept;
  kept.reserve(triples.size());
  for (const Triple& t : triples) {
    if (!held.contains(t.head) && !held.contains(t.tail)) {
      kept.push_back(t);
    }
  }
  return kept;
}

}  // namespace

InductiveSplit make_inductive(const KnowledgeGraphDataset& dataset,
                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("inductive fraction must be in (0, 1]");
  }
  const std::vector<Triple>& test = dataset.test.triples;
  if (test.empty()) {
    throw DataError("cannot build an inductive split from an empty test set");
  }
  const auto sample_size =
      static_cast<std::size_t>(fraction * static_cast<double>(test.size()));
  if (sample_size == 0) {
    throw ConfigError("inductive fraction selects zero test triples");
  }

  // Partial Fisher-Yates: the first sample_size slots of `order` are a
  // uniform sample without replacement.
  std::vector<std::size_t> order(test.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    order[i] = i;
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < sample_size; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.below(order.size() - i));
    std::swap(order[i], order[j]);
  }

  InductiveSplit split;
  split.provenance = InductiveProvenance{"", fraction, seed};
  split.test.role = SplitRole::testing;
  split.test.triples.reserve(sample_size);
  for (std::size_t i = 0; i < sample_size; ++i) {
    split.test.triples.push_back(test[order[i]]);
  }

  const std::unordered_set<EntityId> test_entities =
      entity_set(split.test.triples);
  split.train.role = SplitRole::training;
  split.train.triples = drop_touching(dataset.train.triples, test_entities);
  split.valid.role = SplitRole::validation;
  split.valid.triples = drop_touching(dataset.valid.triples, test_entities);

  const std::unordered_set<EntityId> valid_entities =
      entity_set(split.valid.triples);
  split.train.triples = drop_touching(split.train.triples, valid_entities);

  if (split.train.triples.empty() || split.valid.triples.empty()) {
    std::ostringstream msg;
    msg << "degenerate inductive split: " << split.train.triples.size()
        << " training and " << split.valid.triples.size()
        << " validation triples survive entity pruning";
    throw DataError(msg.str());
  }
  return split;
}

InductiveCheckReport verify_inductive(const InductiveSplit& split) {
  InductiveCheckReport report;
  std::unordered_set<EntityId> train_entities =
      entity_set(split.train.triples);
  std::unordered_set<EntityId> valid_entities =
      entity_set(split.valid.triples);
  std::unordered_set<EntityId> seen_entities = train_entities;
  seen_entities.insert(valid_entities.begin(), valid_entities.end());

  std::unordered_set<EntityId> reported;
  for (const Triple& t : split.test.triples) {
    for (EntityId e : {t.head, t.tail}) {
      if (seen_entities.contains(e) && reported.insert(e).second) {
        report.test_overlap.push_back(e);
      }
    }
  }
  reported.clear();
  for (const Triple& t : split.valid.triples) {
    for (EntityId e : {t.head, t.tail}) {
      if (train_entities.contains(e) && reported.insert(e).second) {
        report.valid_overlap.push_back(e);
      }
    }
  }

  std::unordered_set<RelationId> train_relations;
  for (const Triple& t : split.train.triples) {
    train_relations.insert(t.relation);
  }
  std::unordered_set<RelationId> reported_relations;
  for (const Triple& t : split.test.triples) {
    if (!train_relations.contains(t.relation) &&
        reported_relations.insert(t.relation).second) {
      report.test_relations_unseen_in_train.push_back(t.relation);
    }
  }
  std::sort(report.test_overlap.begin(), report.test_overlap.end());
  std::sort(report.valid_overlap.begin(), report.valid_overlap.end());
  std::sort(report.test_relations_unseen_in_train.begin(),
            report.test_relations_unseen_in_train.end());
  return report;
}

std::string inductive_report_text(const InductiveCheckReport& report,
                                  const KnowledgeGraphDataset& dataset) {
  std::ostringstream out;
  const auto list_entities = [&](const std::vector<EntityId>& entities) {
    const std::size_t shown = std::min<std::size_t>(entities.size(), 10);
    for (std::size_t i = 0; i < shown; ++i) {
      out << ' ' << dataset.entities.key(entities[i]);
    }
    if (entities.size() > shown) {
      out << " ...";
    }
    out << '\n';
  };
  out << "test entities disjoint from train+valid: "
      << (report.test_overlap.empty() ? "pass" : "FAIL");
  if (!report.test_overlap.empty()) {
    out << " (" << report.test_overlap.size() << " offenders):";
    list_entities(report.test_overlap);
  } else {
    out << '\n';
  }
  out << "valid entities disjoint from train: "
      << (report.valid_overlap.empty() ? "pass" : "FAIL");
  if (!report.valid_overlap.empty()) {
    out << " (" << report.valid_overlap.size() << " offenders):";
    list_entities(report.valid_overlap);
  } else {
    out << '\n';
  }
  out << "test relations unseen in training: "
      << report.test_relations_unseen_in_train.size() << '\n';
  return out.str();
}

void save_inductive(const InductiveSplit& split,
                    const KnowledgeGraphDataset& dataset,
                    const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  const auto write_split = [&](const DatasetSplit& s, const char* filename) {
    std::ofstream out(directory / filename);
    if (!out) {
      throw DataError("cannot write split file: " +
                      (directory / filename).string());
    }
    for (const Triple& t : s.triples) {
      out << dataset.entities.key(t.head) << '\t'
          << dataset.relations.key(t.relation) << '\t'
          << dataset.entities.key(t.tail) << '\n';
    }
  };
  write_split(split.train, "train.txt");
  write_split(split.valid, "valid.txt");
  write_split(split.test, "test.txt");

  nlohmann::ordered_json j;
  j["source"] = split.provenance.source;
  j["fraction"] = split.provenance.fraction;
  j["seed"] = split.provenance.seed;
  j["counts"] = {{"train", split.train.triples.size()},
                 {"valid", split.valid.triples.size()},
                 {"test", split.test.triples.size()}};
  std::ofstream out(directory / "provenance.json");
  if (!out) {
    throw DataError("cannot write provenance sidecar");
  }
  out << j.dump(2) << '\n';
}

}  // namespace relpred
