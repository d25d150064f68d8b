#include "dualtkg/eval.hpp"

#include <cstdio>
#include <unordered_set>

namespace dualtkg {

i64 filtered_rank(std::span<const double> logits, i64 gold, const std::vector<i64>& known_objects) {
  const i64 n = static_cast<i64>(logits.size());
  if (gold < 0 || gold >= n) throw DataError("filtered_rank: gold entity missing from vocabulary");
  std::unordered_set<i64> filtered;
  for (i64 o : known_objects)
    if (o != gold) filtered.insert(o);
  const double g = logits[static_cast<std::size_t>(gold)];
  i64 ahead = 0;
  for (i64 e = 0; e < n; ++e) {
    if (e == gold || filtered.count(e)) continue;
    if (logits[static_cast<std::size_t>(e)] >= g) ++ahead;
  }
  return 1 + ahead;
}

MetricReport aggregate(const std::vector<i64>& ranks) {
  if (ranks.empty()) throw DataError("aggregate: no ranks");
  MetricReport r;
  r.query_count = static_cast<i64>(ranks.size());
  double rr = 0, h1 = 0, h3 = 0, h10 = 0;
  for (i64 rank : ranks) {
    rr += 1.0 / static_cast<double>(rank);
    h1 += rank <= 1;
    h3 += rank <= 3;
    h10 += rank <= 10;
  }
  const double inv = 100.0 / static_cast<double>(ranks.size());
  r.mrr = rr * inv;
  r.hits1 = h1 * inv;
  r.hits3 = h3 * inv;
  r.hits10 = h10 * inv;
  return r;
}

std::string metric_csv_row(const std::string& variant, const std::string& split,
                           const MetricReport& report) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%.4f,%.4f", variant.c_str(), split.c_str(),
                report.mrr, report.hits1, report.hits3, report.hits10);
  return buf;
}

}  // namespace dualtkg
