#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dualtkg/data.hpp"
#include "dualtkg/rules.hpp"
#include "dualtkg/tensor.hpp"

namespace dualtkg {

// Edge of either query-conditioned view. Invariance edges drop time
// information (delta_t == 0); dynamics edges carry delta_t = t_q - t >= 1.
struct ViewEdge {
  i64 subject = 0;
  i64 relation = 0;
  i64 object = 0;
  i64 delta_t = 0;
  auto operator<=>(const ViewEdge&) const = default;
};

struct ViewSubgraph {
  i64 timestamp = 0;
  i64 node_count = 0;
  std::vector<ViewEdge> edges;  // deduplicated, (s,r,o,dt)-ascending
  SegmentCsr in_adjacency;      // object -> edge ids, segments = node_count

  bool empty() const { return edges.empty(); }
  // Sorts + dedups the edge list and rebuilds the adjacency, so encoder
  // output does not depend on the order edges were collected in.
  void canonicalize();
};

// Facts strictly before a moving horizon, indexed for the retrieval
// patterns both views need. Snapshots must be appended in ascending
// timestamp order; per-key lists then stay (t asc, o asc) sorted.
class HistoryIndex {
 public:
  struct TimeObj {
    i64 t, o;
  };
  struct SubjectFact {
    i64 t, r, o;
  };

  void add_snapshot(const Snapshot& snap);
  i64 fact_count() const { return fact_count_; }

  const std::vector<TimeObj>& matches(i64 subject, i64 relation) const;
  const std::vector<SubjectFact>& of_subject(i64 subject) const;

 private:
  std::unordered_map<std::uint64_t, std::vector<TimeObj>> by_subject_relation_;
  std::unordered_map<i64, std::vector<SubjectFact>> by_subject_;
  i64 last_timestamp_ = -1;
  i64 fact_count_ = 0;
};

// All historical facts matching a query's (subject, relation), timestamps
// dropped, duplicates collapsed.
ViewSubgraph build_invariance(const QuerySet& queries, const HistoryIndex& history,
                              i64 entity_count);

// Rule-guided retrieval: per query, iterate its head relation's rules by
// descending confidence and scan each body relation's facts newest-first
// (ties by object id, then subject id) until the per-query cap is hit.
// Queries whose relation has no mined rule contribute nothing.
ViewSubgraph build_dynamics(const QuerySet& queries, const HistoryIndex& history,
                            const RuleIndex& rules, i64 cap, i64 entity_count);

// Heuristic fallback: the cap newest historical facts involving the query
// subject, regardless of relation (ties by relation id, then object id).
ViewSubgraph build_dynamics_simple(const QuerySet& queries, const HistoryIndex& history, i64 cap,
                                   i64 entity_count);

// Line-oriented dump: "s r o" for invariance edges, "s r o dt" otherwise.
void write_edge_list(const std::string& path, const ViewSubgraph& graph);

// Merged time-ordered snapshots of one history convention (training: train
// facts only; evaluation: everything known).
struct Timeline {
  SnapshotSequence snapshots;

  static Timeline merge(std::initializer_list<const SnapshotSequence*> splits);
  // Last <= window_len snapshots strictly before t_q, oldest first.
  std::vector<const Snapshot*> window_before(i64 t_q, int window_len) const;
};

struct ViewProviderConfig {
  i64 cap = 10;
  bool simple_dynamics = false;
  bool need_invariance = true;
  bool need_dynamics = true;
};

// Lazily builds and caches both views per query timestamp over one timeline.
// Requests may arrive in any order across epochs; history advances forward
// only and cache hits serve revisits.
class ViewProvider {
 public:
  ViewProvider(const Timeline* timeline, const RuleIndex* rules, i64 entity_count,
               ViewProviderConfig cfg);

  const std::pair<ViewSubgraph, ViewSubgraph>& views(i64 t_q, const QuerySet& queries);

 private:
  const Timeline* timeline_;
  const RuleIndex* rules_;
  i64 entity_count_;
  ViewProviderConfig cfg_;
  HistoryIndex history_;
  std::size_t next_snapshot_ = 0;
  std::unordered_map<i64, std::pair<ViewSubgraph, ViewSubgraph>> cache_;
};

}  // namespace dualtkg
