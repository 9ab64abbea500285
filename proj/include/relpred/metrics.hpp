#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relpred/kg_data.hpp"
#include "relpred/model.hpp"
#include "relpred/tokenizer.hpp"

namespace relpred {

// Exact score ties are rare with float logits but change ranks on degenerate
// models, so the policy is explicit. optimistic counts strictly-greater
// scores only; mean can yield half-integer ranks.
enum class TiePolicy { optimistic, pessimistic, mean };

TiePolicy tie_policy_from_string(const std::string& name);

// 1 + number of competitors ranked above the ground truth.
double rank_of(std::span<const double> scores, RelationId gt,
               TiePolicy policy = TiePolicy::optimistic);

// Raw rank decreased by the number of other valid relations ranked above the
// ground truth; equals the rank after deleting those relations' scores.
// Throws MetricError when gt is not in valid.
double filtered_rank(std::span<const double> scores, RelationId gt,
                     std::span<const RelationId> valid,
                     TiePolicy policy = TiePolicy::optimistic);

double mean_rank(std::span<const double> ranks);
double mrr(std::span<const double> ranks);
double hits_at_n(std::span<const double> ranks, int n);

struct RankRecord {
  Triple query;
  double raw_rank = 0.0;
  double filtered_rank = 0.0;
};

struct HitsEntry {
  int n = 0;
  double raw = 0.0;
  double filtered = 0.0;
};

struct MetricsReport {
  std::size_t query_count = 0;
  double mean_rank = 0.0;
  double filtered_mean_rank = 0.0;
  double mrr = 0.0;
  double filtered_mrr = 0.0;
  std::vector<HitsEntry> hits;  // sorted by n
};

MetricsReport aggregate(std::span<const RankRecord> records,
                        std::span<const int> hits_levels);

struct EvalOptions {
  std::vector<int> hits_levels{1, 5};
  TiePolicy tie_policy = TiePolicy::optimistic;
  int threads = 0;
};

struct EvalResult {
  MetricsReport report;
  std::vector<RankRecord> records;  // in query order
};

// Scores every triple of `split` in evaluation mode and ranks the ground
// truth relation raw and filtered (index should span train+valid+test).
EvalResult evaluate(const ClassifierState& state,
                    const KnowledgeGraphDataset& dataset,
                    const DatasetSplit& split, const PairRelationIndex& index,
                    const Vocabulary& vocab, std::size_t pad_len,
                    const EvalOptions& options = {});

// JSON with the mean_rank / filtered_mean_rank / mrr / filtered_mrr /
// hits<N> / filtered_hits<N> field set.
std::string metrics_json(const MetricsReport& report);
std::string metrics_table(const MetricsReport& report);

void write_rank_csv(const std::filesystem::path& path,
                    std::span<const RankRecord> records,
                    const KnowledgeGraphDataset& dataset);

}  // namespace relpred
