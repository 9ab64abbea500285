#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "relpred/kg_data.hpp"
#include "relpred/metrics.hpp"

namespace relpred {

struct FailureRow {
  std::size_t id = 0;  // 1-based ordinal in the report
  double rank = 0.0;
  std::string head_name;
  std::string relation_name;
  std::string tail_name;
  std::size_t relation_train_count = 0;
};

// Top-k test queries by filtered rank descending (raw rank behind the flag),
// ties broken by query order, joined with names and the relation's training
// frequency. k > |records| returns everything.
std::vector<FailureRow> worst_predictions(std::span<const RankRecord> records,
                                          const KnowledgeGraphDataset& dataset,
                                          std::size_t k,
                                          bool use_raw_rank = false);

std::string failures_table(std::span<const FailureRow> rows);
void write_failures_csv(const std::filesystem::path& path,
                        std::span<const FailureRow> rows);

}  // namespace relpred
