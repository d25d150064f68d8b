#include "dualtkg/rules.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace dualtkg {

namespace {

struct PairKey {
  i64 s, o;
  bool operator==(const PairKey& other) const { return s == other.s && o == other.o; }
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const {
    return std::hash<std::uint64_t>()((static_cast<std::uint64_t>(k.s) << 32) ^
                                      static_cast<std::uint64_t>(k.o));
  }
};

struct PairInfo {
  std::vector<std::pair<i64, i64>> by_time;       // (t, relation), time-ascending
  std::unordered_map<i64, i64> latest_per_rel;    // relation -> max t on this pair
};

struct MiningIndex {
  std::vector<Quadruple> facts;
  std::unordered_map<PairKey, PairInfo, PairKeyHash> pairs;
  std::unordered_map<i64, std::vector<i64>> facts_of_relation;  // relation -> fact ids
  std::vector<i64> relations;                                   // ascending, with facts

  explicit MiningIndex(const SnapshotSequence& snapshots) {
    for (const auto& snap : snapshots)
      facts.insert(facts.end(), snap.facts.begin(), snap.facts.end());
    for (std::size_t i = 0; i < facts.size(); ++i) {
      const auto& f = facts[i];
      auto& info = pairs[PairKey{f.subject, f.object}];
      info.by_time.emplace_back(f.timestamp, f.relation);
      auto [it, fresh] = info.latest_per_rel.emplace(f.relation, f.timestamp);
      if (!fresh) it->second = std::max(it->second, f.timestamp);
      facts_of_relation[f.relation].push_back(static_cast<i64>(i));
    }
    for (auto& [key, info] : pairs) std::sort(info.by_time.begin(), info.by_time.end());
    for (const auto& [r, ids] : facts_of_relation) relations.push_back(r);
    std::sort(relations.begin(), relations.end());
  }

  bool head_follows(i64 subject, i64 object, i64 head, i64 t1) const {
    auto it = pairs.find(PairKey{subject, object});
    if (it == pairs.end()) return false;
    auto rel = it->second.latest_per_rel.find(head);
    return rel != it->second.latest_per_rel.end() && rel->second > t1;
  }
};

std::vector<TemporalRule> mine_exhaustive(const MiningIndex& index, i64 min_body_support) {
  // support counts keyed (head, body); body support is per body relation
  std::map<std::pair<i64, i64>, i64> rule_support;
  std::unordered_map<i64, i64> body_support;
  for (const auto& [r, ids] : index.facts_of_relation)
    body_support[r] = static_cast<i64>(ids.size());
  for (const auto& [key, info] : index.pairs) {
    for (const auto& [t1, r_b] : info.by_time) {
      for (const auto& [r_h, latest] : info.latest_per_rel)
        if (latest > t1) ++rule_support[{r_h, r_b}];
    }
  }
  std::vector<TemporalRule> rules;
  for (const auto& [key, support] : rule_support) {
    const i64 bs = body_support[key.second];
    if (bs < min_body_support) continue;
    rules.push_back(TemporalRule{key.first, key.second,
                                 static_cast<double>(support) / static_cast<double>(bs), support,
                                 bs});
  }
  return rules;
}

// Draw k distinct indices out of [0, n) (partial Fisher-Yates).
std::vector<i64> sample_distinct(i64 n, i64 k, Rng& rng) {
  std::vector<i64> pool(static_cast<std::size_t>(n));
  for (i64 i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (i64 i = 0; i < k; ++i) {
    const i64 j = i + rng.uniform_int(n - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

std::vector<TemporalRule> mine_head_sampled(const MiningIndex& index, i64 head, i64 num_walks,
                                            i64 min_body_support, Rng rng) {
  const auto& head_fact_ids = index.facts_of_relation.at(head);
  // Walk backwards from sampled head occurrences to collect candidate bodies.
  std::vector<i64> candidates;
  for (i64 w = 0; w < num_walks; ++w) {
    const i64 fid = head_fact_ids[static_cast<std::size_t>(
        rng.uniform_int(static_cast<i64>(head_fact_ids.size())))];
    const auto& f = index.facts[static_cast<std::size_t>(fid)];
    const auto& info = index.pairs.at(PairKey{f.subject, f.object});
    // facts on the same pair strictly before t2
    const auto end = std::lower_bound(info.by_time.begin(), info.by_time.end(),
                                      std::make_pair(f.timestamp, static_cast<i64>(0)));
    const i64 n_before = static_cast<i64>(end - info.by_time.begin());
    if (n_before == 0) continue;
    const i64 pick = rng.uniform_int(n_before);
    candidates.push_back(info.by_time[static_cast<std::size_t>(pick)].second);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  std::vector<TemporalRule> rules;
  for (i64 body : candidates) {
    const auto& body_ids = index.facts_of_relation.at(body);
    const i64 total = static_cast<i64>(body_ids.size());
    std::vector<i64> chosen;
    if (total <= num_walks) {
      chosen = body_ids;  // sampling disabled: exact confidence
    } else {
      auto picks = sample_distinct(total, num_walks, rng);
      std::sort(picks.begin(), picks.end());
      chosen.reserve(picks.size());
      for (i64 p : picks) chosen.push_back(body_ids[static_cast<std::size_t>(p)]);
    }
    i64 positives = 0;
    for (i64 fid : chosen) {
      const auto& f = index.facts[static_cast<std::size_t>(fid)];
      if (index.head_follows(f.subject, f.object, head, f.timestamp)) ++positives;
    }
    const i64 bs = static_cast<i64>(chosen.size());
    if (positives == 0 || bs < min_body_support) continue;
    rules.push_back(TemporalRule{head, body,
                                 static_cast<double>(positives) / static_cast<double>(bs),
                                 positives, bs});
  }
  return rules;
}

}  // namespace

RuleIndex RuleIndex::from_rules(std::vector<TemporalRule> rules) {
  RuleIndex index;
  for (auto& r : rules) index.by_head_[r.head_relation].push_back(r);
  for (auto& [head, list] : index.by_head_) {
    std::sort(list.begin(), list.end(), [](const TemporalRule& a, const TemporalRule& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.body_support != b.body_support) return a.body_support > b.body_support;
      return a.body_relation < b.body_relation;
    });
  }
  return index;
}

const std::vector<TemporalRule>& RuleIndex::rules_for(i64 head_relation) const {
  static const std::vector<TemporalRule> empty;
  auto it = by_head_.find(head_relation);
  return it == by_head_.end() ? empty : it->second;
}

std::vector<i64> RuleIndex::heads() const {
  std::vector<i64> out;
  out.reserve(by_head_.size());
  for (const auto& [head, list] : by_head_) out.push_back(head);
  std::sort(out.begin(), out.end());
  return out;
}

i64 RuleIndex::total() const {
  i64 n = 0;
  for (const auto& [head, list] : by_head_) n += static_cast<i64>(list.size());
  return n;
}

bool RuleIndex::operator==(const RuleIndex& other) const {
  if (by_head_.size() != other.by_head_.size()) return false;
  for (const auto& [head, list] : by_head_) {
    auto it = other.by_head_.find(head);
    if (it == other.by_head_.end() || it->second != list) return false;
  }
  return true;
}

RuleIndex mine_rules(const SnapshotSequence& train, const MiningConfig& cfg, Rng& rng) {
  if (train.empty()) throw DataError("mine_rules: empty training split");
  MiningIndex index(train);
  if (static_cast<i64>(index.facts.size()) <= cfg.exhaustive_threshold)
    return RuleIndex::from_rules(mine_exhaustive(index, cfg.min_body_support));

  const auto& heads = index.relations;
  std::vector<std::vector<TemporalRule>> per_head(heads.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < heads.size(); ++i) {
    per_head[i] = mine_head_sampled(index, heads[i], cfg.num_walks, cfg.min_body_support,
                                    rng.fork(static_cast<std::uint64_t>(heads[i])));
  }
  std::vector<TemporalRule> all;
  for (auto& list : per_head) all.insert(all.end(), list.begin(), list.end());
  return RuleIndex::from_rules(std::move(all));
}

void save_rules(const RuleIndex& index, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write rules: " + path);
  char buf[64];
  for (i64 head : index.heads()) {
    for (const auto& r : index.rules_for(head)) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.confidence);
      os << r.head_relation << ',' << r.body_relation << ',' << buf << ',' << r.rule_support << ','
         << r.body_support << '\n';
    }
  }
  if (!os) throw DataError("write failed: " + path);
}

RuleIndex load_rules(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open rules: " + path);
  std::vector<TemporalRule> rules;
  std::string line;
  i64 lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    TemporalRule r;
    char trail = 0;
    const int got = std::sscanf(line.c_str(), "%" SCNd64 ",%" SCNd64 ",%lg,%" SCNd64 ",%" SCNd64 " %c",
                                &r.head_relation, &r.body_relation, &r.confidence, &r.rule_support,
                                &r.body_support, &trail);
    if (got != 5)
      throw DataError("malformed rule at line " + std::to_string(lineno) + " in " + path);
    rules.push_back(r);
  }
  return RuleIndex::from_rules(std::move(rules));
}

}  // namespace dualtkg
