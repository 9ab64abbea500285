#include "relpred/analysis.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "relpred/errors.hpp"

namespace relpred {

std::vector<FailureRow> worst_predictions(std::span<const RankRecord> records,
                                          const KnowledgeGraphDataset& dataset,
                                          std::size_t k, bool use_raw_rank) {
  if (records.empty()) {
    throw DataError("no rank records to analyze");
  }
  if (k < 1) {
    throw ConfigError("failure report size k must be >= 1");
  }
  const auto rank_of_record = [use_raw_rank](const RankRecord& r) {
    return use_raw_rank ? r.raw_rank : r.filtered_rank;
  };

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return rank_of_record(records[a]) >
                            rank_of_record(records[b]);
                   });
  const std::size_t count = std::min(k, records.size());

  std::unordered_map<RelationId, std::size_t> train_counts;
  for (const Triple& t : dataset.train.triples) {
    ++train_counts[t.relation];
  }

  std::vector<FailureRow> rows;
  rows.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const RankRecord& record = records[order[i]];
    const auto counted = train_counts.find(record.query.relation);
    rows.push_back(FailureRow{
        i + 1,
        rank_of_record(record),
        dataset.entity_name(record.query.head),
        dataset.relations.key(record.query.relation),
        dataset.entity_name(record.query.tail),
        counted == train_counts.end() ? 0 : counted->second,
    });
  }
  return rows;
}

std::string failures_table(std::span<const FailureRow> rows) {
  const char* headers[6] = {"ID",       "Rank",      "Head Node",
                            "Relation", "Tail Node", "Train Count"};
  std::vector<std::array<std::string, 6>> cells;
  cells.reserve(rows.size());
  for (const FailureRow& row : rows) {
    std::ostringstream rank;
    rank << row.rank;
    cells.push_back({std::to_string(row.id), rank.str(), row.head_name,
                     row.relation_name, row.tail_name,
                     std::to_string(row.relation_train_count)});
  }
  std::array<std::size_t, 6> widths;
  for (std::size_t c = 0; c < 6; ++c) {
    widths[c] = std::string(headers[c]).size();
    for (const auto& row : cells) {
      widths[c] = std::max(widths[c], row[c].size());
    }
  }
  std::ostringstream out;
  const auto emit = [&](const std::array<std::string, 6>& row) {
    for (std::size_t c = 0; c < 6; ++c) {
      out << row[c];
      if (c + 1 < 6) {
        for (std::size_t i = row[c].size(); i < widths[c] + 2; ++i) {
          out << ' ';
        }
      }
    }
    out << '\n';
  };
  emit({headers[0], headers[1], headers[2], headers[3], headers[4],
        headers[5]});
  for (const auto& row : cells) {
    emit(row);
  }
  return out.str();
}

namespace {

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\n") == std::string::npos) {
    return value;
  }
  std::string quoted = "\"";
  for (char c : value) {
    quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
  }
  quoted += '"';
  return quoted;
}

}  // namespace

void write_failures_csv(const std::filesystem::path& path,
                        std::span<const FailureRow> rows) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write failure csv: " + path.string());
  }
  out << "id,rank,head_name,relation_name,tail_name,relation_train_count\n";
  for (const FailureRow& row : rows) {
    out << row.id << ',' << row.rank << ',' << csv_field(row.head_name) << ','
        << csv_field(row.relation_name) << ',' << csv_field(row.tail_name)
        << ',' << row.relation_train_count << '\n';
  }
}

}  // namespace relpred
