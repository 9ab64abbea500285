#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "relpred/errors.hpp"
#include "relpred/metrics.hpp"
#include "relpred/rng.hpp"

using namespace relpred;

namespace {

// Brute-force oracle: delete the other valid relations' scores and re-rank
// the ground truth in what remains.
double delete_and_rerank(const std::vector<double>& scores, RelationId gt,
                         const std::vector<RelationId>& valid,
                         TiePolicy policy) {
  std::vector<double> kept;
  std::size_t gt_pos = 0;
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const bool is_other_valid =
        r != gt && std::find(valid.begin(), valid.end(),
                             static_cast<RelationId>(r)) != valid.end();
    if (is_other_valid) {
      continue;
    }
    if (r == gt) {
      gt_pos = kept.size();
    }
    kept.push_back(scores[r]);
  }
  return rank_of(kept, static_cast<RelationId>(gt_pos), policy);
}

// Full-sort oracle for rank_of.
double sorted_rank(const std::vector<double>& scores, RelationId gt,
                   TiePolicy policy) {
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto first = std::lower_bound(sorted.begin(), sorted.end(), scores[gt],
                                      std::greater<>());
  const auto last = std::upper_bound(sorted.begin(), sorted.end(), scores[gt],
                                     std::greater<>());
  const double best = 1.0 + static_cast<double>(first - sorted.begin());
  const double worst = static_cast<double>(last - sorted.begin());
  switch (policy) {
    case TiePolicy::optimistic:
      return best;
    case TiePolicy::pessimistic:
      return worst;
    default:
      return (best + worst) / 2.0;
  }
}

}  // namespace

TEST_CASE("rank_of basics") {
  const std::vector<double> scores{0.1, 0.9, 0.5};
  CHECK(rank_of(scores, 1) == 1.0);
  CHECK(rank_of(scores, 0) == 3.0);
  CHECK(rank_of(scores, 2) == 2.0);
}

TEST_CASE("rank_of tie policies") {
  const std::vector<double> scores{0.5, 0.5, 0.2};
  CHECK(rank_of(scores, 1, TiePolicy::optimistic) == 1.0);
  CHECK(rank_of(scores, 1, TiePolicy::pessimistic) == 2.0);
  CHECK(rank_of(scores, 1, TiePolicy::mean) == 1.5);
}

TEST_CASE("rank_of is invariant under strictly monotone maps") {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    std::vector<double> scores(n);
    for (double& s : scores) {
      s = rng.uniform01() * 10.0 - 5.0;
    }
    const auto gt = static_cast<RelationId>(rng.below(n));
    std::vector<double> mapped(n);
    for (std::size_t i = 0; i < n; ++i) {
      mapped[i] = 3.0 * scores[i] + 1.0;
    }
    CHECK(rank_of(scores, gt) == rank_of(mapped, gt));
    for (std::size_t i = 0; i < n; ++i) {
      mapped[i] = std::exp(scores[i]);
    }
    CHECK(rank_of(scores, gt) == rank_of(mapped, gt));
  }
}

TEST_CASE("filtered_rank on the documented example") {
  const std::vector<double> scores{4, 3, 2, 1};
  const std::vector<RelationId> valid{0, 2, 3};
  CHECK(rank_of(scores, 3) == 4.0);
  CHECK(filtered_rank(scores, 3, valid) == 2.0);
}

TEST_CASE("filtered_rank with nothing to filter equals the raw rank") {
  const std::vector<double> scores{0.3, 0.1, 0.9};
  const std::vector<RelationId> valid{0};
  CHECK(filtered_rank(scores, 0, valid) == rank_of(scores, 0));
}

TEST_CASE("filtered_rank requires gt in the valid set") {
  const std::vector<double> scores{1, 2};
  const std::vector<RelationId> valid{1};
  CHECK_THROWS_AS(filtered_rank(scores, 0, valid), MetricError);
}

TEST_CASE("filtered_rank equals the delete-and-rerank oracle") {
  Rng rng(29);
  for (const TiePolicy policy :
       {TiePolicy::optimistic, TiePolicy::pessimistic, TiePolicy::mean}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 2 + rng.below(7);  // R <= 8
      std::vector<double> scores(n);
      const bool force_ties = trial % 3 == 0;
      for (double& s : scores) {
        // Integer-ish scores on a third of the cases so ties occur.
        s = force_ties ? static_cast<double>(rng.below(3))
                       : rng.uniform01();
      }
      const auto gt = static_cast<RelationId>(rng.below(n));
      std::vector<RelationId> valid{gt};
      for (std::size_t r = 0; r < n; ++r) {
        if (r != gt && rng.uniform01() < 0.4) {
          valid.push_back(static_cast<RelationId>(r));
        }
      }
      const double got = filtered_rank(scores, gt, valid, policy);
      const double want = delete_and_rerank(scores, gt, valid, policy);
      CAPTURE(trial);
      REQUIRE(got == want);
      REQUIRE(got >= 1.0);
      REQUIRE(got <= rank_of(scores, gt, policy));
    }
  }
}

TEST_CASE("rank_of equals the full-sort oracle") {
  Rng rng(31);
  for (const TiePolicy policy :
       {TiePolicy::optimistic, TiePolicy::pessimistic, TiePolicy::mean}) {
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 1 + rng.below(10);
      std::vector<double> scores(n);
      for (double& s : scores) {
        s = trial % 4 == 0 ? static_cast<double>(rng.below(4))
                           : rng.uniform01();
      }
      const auto gt = static_cast<RelationId>(rng.below(n));
      REQUIRE(rank_of(scores, gt, policy) == sorted_rank(scores, gt, policy));
    }
  }
}

TEST_CASE("mean_rank, mrr and hits basics") {
  CHECK(mean_rank(std::vector<double>{1, 2, 3}) == doctest::Approx(2.0));
  CHECK(mean_rank(std::vector<double>{1, 1, 1}) == doctest::Approx(1.0));
  CHECK(mean_rank(std::vector<double>{1, 2, 4}) ==
        doctest::Approx(7.0 / 3.0));
  CHECK(mrr(std::vector<double>{1, 1}) == doctest::Approx(1.0));
  CHECK(mrr(std::vector<double>{2}) == doctest::Approx(0.5));
  CHECK(mrr(std::vector<double>{1, 3, 2}) == doctest::Approx(11.0 / 18.0));
  CHECK(hits_at_n(std::vector<double>{1, 3}, 1) == doctest::Approx(0.5));
  CHECK(hits_at_n(std::vector<double>{2, 2, 2}, 1) == doctest::Approx(0.0));
  CHECK(hits_at_n(std::vector<double>{5, 2, 9}, 9) == doctest::Approx(1.0));
}

TEST_CASE("aggregates reject empty inputs") {
  CHECK_THROWS_AS(mean_rank(std::vector<double>{}), MetricError);
  CHECK_THROWS_AS(mrr(std::vector<double>{}), MetricError);
  CHECK_THROWS_AS(hits_at_n(std::vector<double>{}, 1), MetricError);
  CHECK_THROWS_AS(aggregate({}, std::vector<int>{1}), MetricError);
}

TEST_CASE("aggregate obeys the metric identities") {
  Rng rng(41);
  const std::size_t R = 12;
  std::vector<RankRecord> records;
  for (int q = 0; q < 800; ++q) {
    std::vector<double> scores(R);
    for (double& s : scores) {
      s = rng.uniform01();
    }
    const auto gt = static_cast<RelationId>(rng.below(R));
    std::vector<RelationId> valid{gt};
    for (std::size_t r = 0; r < R; ++r) {
      if (r != gt && rng.uniform01() < 0.3) {
        valid.push_back(static_cast<RelationId>(r));
      }
    }
    records.push_back(RankRecord{Triple{0, gt, 1}, rank_of(scores, gt),
                                 filtered_rank(scores, gt, valid)});
  }
  const std::vector<int> levels{1, 3, 5, static_cast<int>(R)};
  const MetricsReport report = aggregate(records, levels);
  CHECK(report.query_count == records.size());
  CHECK(report.filtered_mean_rank <= report.mean_rank);
  CHECK(report.filtered_mrr >= report.mrr);
  CHECK(report.mrr > 0.0);
  CHECK(report.mrr <= 1.0);
  CHECK(report.mean_rank >= 1.0);
  CHECK(report.mean_rank <= static_cast<double>(R));
  for (std::size_t i = 0; i < report.hits.size(); ++i) {
    CHECK(report.hits[i].filtered >= report.hits[i].raw);
    if (i > 0) {
      CHECK(report.hits[i].raw >= report.hits[i - 1].raw);
      CHECK(report.hits[i].filtered >= report.hits[i - 1].filtered);
    }
  }
  CHECK(report.hits.back().raw == doctest::Approx(1.0));  // hits@R
  CHECK(report.hits.back().filtered == doctest::Approx(1.0));

  SUBCASE("permuting the queries changes nothing") {
    std::vector<RankRecord> shuffled = records;
    Rng perm(7);
    perm.shuffle(shuffled);
    const MetricsReport again = aggregate(shuffled, levels);
    CHECK(again.mean_rank == doctest::Approx(report.mean_rank));
    CHECK(again.filtered_mrr == doctest::Approx(report.filtered_mrr));
    CHECK(again.hits[0].raw == doctest::Approx(report.hits[0].raw));
  }
}

TEST_CASE("a perfect predictor aggregates to all ones") {
  std::vector<RankRecord> records(10, RankRecord{Triple{0, 0, 1}, 1.0, 1.0});
  const MetricsReport report = aggregate(records, std::vector<int>{1, 5});
  CHECK(report.mean_rank == doctest::Approx(1.0));
  CHECK(report.filtered_mean_rank == doctest::Approx(1.0));
  CHECK(report.mrr == doctest::Approx(1.0));
  CHECK(report.filtered_mrr == doctest::Approx(1.0));
  for (const HitsEntry& h : report.hits) {
    CHECK(h.raw == doctest::Approx(1.0));
    CHECK(h.filtered == doctest::Approx(1.0));
  }
}

TEST_CASE("metrics json carries the full field set") {
  std::vector<RankRecord> records(4, RankRecord{Triple{0, 0, 1}, 2.0, 1.0});
  const MetricsReport report = aggregate(records, std::vector<int>{1, 5});
  const std::string json = metrics_json(report);
  for (const char* key :
       {"\"mean_rank\"", "\"filtered_mean_rank\"", "\"mrr\"",
        "\"filtered_mrr\"", "\"hits1\"", "\"filtered_hits1\"", "\"hits5\"",
        "\"filtered_hits5\"", "\"query_count\""}) {
    CAPTURE(key);
    CHECK(json.find(key) != std::string::npos);
  }
  CHECK(metrics_table(report).find("Filtered Mean Reciprocal Rank") !=
        std::string::npos);
}

TEST_CASE("tie_policy_from_string") {
  CHECK(tie_policy_from_string("optimistic") == TiePolicy::optimistic);
  CHECK(tie_policy_from_string("pessimistic") == TiePolicy::pessimistic);
  CHECK(tie_policy_from_string("mean") == TiePolicy::mean);
  CHECK_THROWS_AS(tie_policy_from_string("nope"), ConfigError);
}
