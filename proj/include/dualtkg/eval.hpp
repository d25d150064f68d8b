#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dualtkg/errors.hpp"

namespace dualtkg {

using i64 = std::int64_t;

struct RankingResult {
  i64 query_id = 0;
  i64 gold = 0;
  i64 filtered_rank = 1;
};

// Time-aware filtered metrics, reported x100.
struct MetricReport {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  i64 query_count = 0;
};

// Rank of `gold` among all entities after removing the other known-correct
// objects for the same (s, r, t) from contention. Ties against remaining
// competitors are counted as ahead of the gold (pessimistic).
i64 filtered_rank(std::span<const double> logits, i64 gold, const std::vector<i64>& known_objects);

MetricReport aggregate(const std::vector<i64>& ranks);

std::string metric_csv_row(const std::string& variant, const std::string& split,
                           const MetricReport& report);

}  // namespace dualtkg
