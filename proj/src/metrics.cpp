#include "relpred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "relpred/errors.hpp"
#include "relpred/parallel.hpp"

namespace relpred {

namespace {

struct TieCounts {
  std::size_t above = 0;  // strictly greater score
  std::size_t tied = 0;   // equal score, not the ground truth itself
};

TieCounts count_competitors(std::span<const double> scores, RelationId gt) {
  const double gt_score = scores[gt];
  TieCounts counts;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (r == gt) {
      continue;
    }
    if (scores[r] > gt_score) {
      ++counts.above;
    } else if (scores[r] == gt_score) {
      ++counts.tied;
    }
  }
  return counts;
}

double rank_from_counts(const TieCounts& counts, TiePolicy policy) {
  switch (policy) {
    case TiePolicy::optimistic:
      return 1.0 + static_cast<double>(counts.above);
    case TiePolicy::pessimistic:
      return 1.0 + static_cast<double>(counts.above + counts.tied);
    default:
      return 1.0 + static_cast<double>(counts.above) +
             0.5 * static_cast<double>(counts.tied);
  }
}

void require_non_empty(std::span<const double> ranks) {
  if (ranks.empty()) {
    throw MetricError("metric over an empty rank list");
  }
}

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) {
    return value;
  }
  std::string quoted = "\"";
  for (char c : value) {
    if (c == '"') {
      quoted += "\"\"";
    } else {
      quoted += c;
    }
  }
  quoted += '"';
  return quoted;
}

}  // namespace

TiePolicy tie_policy_from_string(const std::string& name) {
  if (name == "optimistic") {
    return TiePolicy::optimistic;
  }
  if (name == "pessimistic") {
    return TiePolicy::pessimistic;
  }
  if (name == "mean") {
    return TiePolicy::mean;
  }
  throw ConfigError("unknown tie policy: " + name);
}

double rank_of(std::span<const double> scores, RelationId gt,
               TiePolicy policy) {
  if (gt >= scores.size()) {
    throw MetricError("ground-truth relation out of range");
  }
  return rank_from_counts(count_competitors(scores, gt), policy);
}

double filtered_rank(std::span<const double> scores, RelationId gt,
                     std::span<const RelationId> valid, TiePolicy policy) {
  if (gt >= scores.size()) {
    throw MetricError("ground-truth relation out of range");
  }
  if (std::find(valid.begin(), valid.end(), gt) == valid.end()) {
    throw MetricError(
        "ground-truth relation is not in the valid set for its pair");
  }
  // Count only competitors that are not themselves valid relations; this is
  // identical to deleting the other valid relations and re-ranking.
  const double gt_score = scores[gt];
  TieCounts counts;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    if (r == gt ||
        std::find(valid.begin(), valid.end(), static_cast<RelationId>(r)) !=
            valid.end()) {
      continue;
    }
    if (scores[r] > gt_score) {
      ++counts.above;
    } else if (scores[r] == gt_score) {
      ++counts.tied;
    }
  }
  return rank_from_counts(counts, policy);
}

double mean_rank(std::span<const double> ranks) {
  require_non_empty(ranks);
  double sum = 0.0;
  for (double r : ranks) {
    sum += r;
  }
  return sum / static_cast<double>(ranks.size());
}

double mrr(std::span<const double> ranks) {
  require_non_empty(ranks);
  double sum = 0.0;
  for (double r : ranks) {
    if (r < 1.0) {
      throw MetricError("rank below 1 in mrr input");
    }
    sum += 1.0 / r;
  }
  return sum / static_cast<double>(ranks.size());
}

double hits_at_n(std::span<const double> ranks, int n) {
  require_non_empty(ranks);
  if (n < 1) {
    throw MetricError("hits level must be >= 1");
  }
  std::size_t hits = 0;
  for (double r : ranks) {
    if (r <= static_cast<double>(n)) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

MetricsReport aggregate(std::span<const RankRecord> records,
                        std::span<const int> hits_levels) {
  if (records.empty()) {
    throw MetricError("cannot aggregate an empty record list");
  }
  std::vector<double> raw(records.size());
  std::vector<double> filtered(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    raw[i] = records[i].raw_rank;
    filtered[i] = records[i].filtered_rank;
  }
  MetricsReport report;
  report.query_count = records.size();
  report.mean_rank = mean_rank(raw);
  report.filtered_mean_rank = mean_rank(filtered);
  report.mrr = mrr(raw);
  report.filtered_mrr = mrr(filtered);
  std::vector<int> levels(hits_levels.begin(), hits_levels.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  for (int n : levels) {
    report.hits.push_back(
        HitsEntry{n, hits_at_n(raw, n), hits_at_n(filtered, n)});
  }
  return report;
}

EvalResult evaluate(const ClassifierState& state,
                    const KnowledgeGraphDataset& dataset,
                    const DatasetSplit& split, const PairRelationIndex& index,
                    const Vocabulary& vocab, std::size_t pad_len,
                    const EvalOptions& options) {
  if (split.triples.empty()) {
    throw DataError("cannot evaluate an empty split");
  }
  std::vector<std::vector<TokenId>> pieces(dataset.entities.size());
  for (std::size_t id = 0; id < pieces.size(); ++id) {
    pieces[id] = name_pieces(dataset.names[id], vocab);
  }

  std::vector<RankRecord> records(split.triples.size());
  const std::size_t threads = resolve_threads(options.threads);
  parallel_chunks(
      split.triples.size(), threads,
      [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const Triple& t = split.triples[i];
          const TokenizedSequence seq =
              assemble_pair(pieces[t.head], pieces[t.tail], pad_len);
          const Logits logits = forward_one(state, seq);
          const auto valid = index.valid_relations(t.head, t.tail);
          records[i] = RankRecord{
              t, rank_of(logits, t.relation, options.tie_policy),
              filtered_rank(logits, t.relation, valid, options.tie_policy)};
        }
      });

  EvalResult result;
  result.report = aggregate(records, options.hits_levels);
  result.records = std::move(records);
  return result;
}

std::string metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["query_count"] = report.query_count;
  j["mean_rank"] = report.mean_rank;
  j["filtered_mean_rank"] = report.filtered_mean_rank;
  j["mrr"] = report.mrr;
  j["filtered_mrr"] = report.filtered_mrr;
  for (const HitsEntry& h : report.hits) {
    j["hits" + std::to_string(h.n)] = h.raw;
    j["filtered_hits" + std::to_string(h.n)] = h.filtered;
  }
  return j.dump(2);
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  const auto row = [&out](const std::string& label, double value) {
    out << label;
    for (std::size_t i = label.size(); i < 31; ++i) {
      out << ' ';
    }
    out << value << '\n';
  };
  out << "queries: " << report.query_count << '\n';
  row("Mean Rank", report.mean_rank);
  row("Filtered Mean Rank", report.filtered_mean_rank);
  row("Mean Reciprocal Rank", report.mrr);
  row("Filtered Mean Reciprocal Rank", report.filtered_mrr);
  for (const HitsEntry& h : report.hits) {
    row("Hits@" + std::to_string(h.n), h.raw);
    row("Filtered Hits@" + std::to_string(h.n), h.filtered);
  }
  return out.str();
}

void write_rank_csv(const std::filesystem::path& path,
                    std::span<const RankRecord> records,
                    const KnowledgeGraphDataset& dataset) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write rank csv: " + path.string());
  }
  out << "query_index,head_name,relation_name,tail_name,raw_rank,"
         "filtered_rank\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const RankRecord& r = records[i];
    out << i << ',' << csv_field(dataset.entity_name(r.query.head)) << ','
        << csv_field(dataset.relations.key(r.query.relation)) << ','
        << csv_field(dataset.entity_name(r.query.tail)) << ',' << r.raw_rank
        << ',' << r.filtered_rank << '\n';
  }
}

}  // namespace relpred
