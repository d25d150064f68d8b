#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualtkg/data.hpp"
#include "dualtkg/rng.hpp"

namespace dualtkg {

// One-hop cyclic temporal rule: body relation between a pair of entities
// supports the head relation between the same pair at a later time.
struct TemporalRule {
  i64 head_relation = 0;
  i64 body_relation = 0;
  double confidence = 0.0;
  i64 rule_support = 0;  // body groundings followed by the head
  i64 body_support = 0;  // body groundings examined
  auto operator<=>(const TemporalRule&) const = default;
};

// Per-head rule lists kept in (confidence desc, body_support desc, body asc)
// order, so the first rule of a head always has maximal confidence.
class RuleIndex {
 public:
  static RuleIndex from_rules(std::vector<TemporalRule> rules);
  const std::vector<TemporalRule>& rules_for(i64 head_relation) const;
  std::vector<i64> heads() const;  // ascending
  i64 total() const;
  bool operator==(const RuleIndex& other) const;

 private:
  std::unordered_map<i64, std::vector<TemporalRule>> by_head_;
};

struct MiningConfig {
  i64 num_walks = 200;           // per head relation, in sampled mode
  i64 min_body_support = 2;      // drop weaker rules
  i64 exhaustive_threshold = 10000;  // full enumeration at or below this fact count
};

// Estimates, for each (head, body) pair, how often a body grounding
// (A, r_b, B, t1) is followed by (A, r_h, B, t2) with t2 > t1. Exhaustive
// below the threshold, temporal-walk sampling above it. Deterministic for
// a fixed seed regardless of thread count.
RuleIndex mine_rules(const SnapshotSequence& train, const MiningConfig& cfg, Rng& rng);

void save_rules(const RuleIndex& index, const std::string& path);
RuleIndex load_rules(const std::string& path);

}  // namespace dualtkg
