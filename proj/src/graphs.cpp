#include "dualtkg/graphs.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace dualtkg {

namespace {

std::uint64_t sr_key(i64 s, i64 r) {
  return (static_cast<std::uint64_t>(s) << 32) ^ static_cast<std::uint64_t>(r);
}

ViewSubgraph finalize(i64 t_q, i64 entity_count, std::set<ViewEdge> edges) {
  ViewSubgraph g;
  g.timestamp = t_q;
  g.node_count = entity_count;
  g.edges.assign(edges.begin(), edges.end());
  g.canonicalize();
  return g;
}

// Walks a (t asc, ...) sorted list newest-first while keeping the in-group
// ascending tie order: groups share a timestamp and are visited back to front.
template <typename Item, typename Fn>
void reverse_chronological(const std::vector<Item>& items, Fn&& fn) {
  const auto n = static_cast<std::ptrdiff_t>(items.size());
  std::ptrdiff_t hi = n;
  while (hi > 0) {
    std::ptrdiff_t lo = hi - 1;
    while (lo > 0 && items[static_cast<std::size_t>(lo - 1)].t == items[static_cast<std::size_t>(hi - 1)].t)
      --lo;
    for (std::ptrdiff_t i = lo; i < hi; ++i)
      if (!fn(items[static_cast<std::size_t>(i)])) return;
    hi = lo;
  }
}

}  // namespace

void ViewSubgraph::canonicalize() {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::vector<i64> object_of(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) object_of[i] = edges[i].object;
  in_adjacency = SegmentCsr::group(object_of, node_count);
}

void HistoryIndex::add_snapshot(const Snapshot& snap) {
  if (snap.timestamp <= last_timestamp_)
    throw DataError("history: snapshots must be added in ascending timestamp order");
  last_timestamp_ = snap.timestamp;
  for (const auto& f : snap.facts) {
    by_subject_relation_[sr_key(f.subject, f.relation)].push_back(TimeObj{f.timestamp, f.object});
    by_subject_[f.subject].push_back(SubjectFact{f.timestamp, f.relation, f.object});
    ++fact_count_;
  }
}

const std::vector<HistoryIndex::TimeObj>& HistoryIndex::matches(i64 subject, i64 relation) const {
  static const std::vector<TimeObj> empty;
  auto it = by_subject_relation_.find(sr_key(subject, relation));
  return it == by_subject_relation_.end() ? empty : it->second;
}

const std::vector<HistoryIndex::SubjectFact>& HistoryIndex::of_subject(i64 subject) const {
  static const std::vector<SubjectFact> empty;
  auto it = by_subject_.find(subject);
  return it == by_subject_.end() ? empty : it->second;
}

ViewSubgraph build_invariance(const QuerySet& queries, const HistoryIndex& history,
                              i64 entity_count) {
  std::set<ViewEdge> edges;
  std::set<std::uint64_t> visited;
  for (const auto& q : queries.entity_queries) {
    if (!visited.insert(sr_key(q.subject, q.relation)).second) continue;
    for (const auto& m : history.matches(q.subject, q.relation))
      edges.insert(ViewEdge{q.subject, q.relation, m.o, 0});
  }
  return finalize(queries.timestamp, entity_count, std::move(edges));
}

ViewSubgraph build_dynamics(const QuerySet& queries, const HistoryIndex& history,
                            const RuleIndex& rules, i64 cap, i64 entity_count) {
  if (cap < 1) throw ConfigError("build_dynamics: cap must be >= 1");
  std::set<ViewEdge> edges;
  std::set<std::uint64_t> visited;
  for (const auto& q : queries.entity_queries) {
    if (!visited.insert(sr_key(q.subject, q.relation)).second) continue;
    i64 accepted = 0;
    for (const auto& rule : rules.rules_for(q.relation)) {
      if (accepted >= cap) break;
      reverse_chronological(history.matches(q.subject, rule.body_relation),
                            [&](const HistoryIndex::TimeObj& m) {
                              edges.insert(ViewEdge{q.subject, rule.body_relation, m.o,
                                                    queries.timestamp - m.t});
                              return ++accepted < cap;
                            });
    }
  }
  return finalize(queries.timestamp, entity_count, std::move(edges));
}

ViewSubgraph build_dynamics_simple(const QuerySet& queries, const HistoryIndex& history, i64 cap,
                                   i64 entity_count) {
  if (cap < 1) throw ConfigError("build_dynamics_simple: cap must be >= 1");
  std::set<ViewEdge> edges;
  std::set<i64> visited;
  for (const auto& q : queries.entity_queries) {
    if (!visited.insert(q.subject).second) continue;
    i64 accepted = 0;
    reverse_chronological(history.of_subject(q.subject), [&](const HistoryIndex::SubjectFact& f) {
      edges.insert(ViewEdge{q.subject, f.r, f.o, queries.timestamp - f.t});
      return ++accepted < cap;
    });
  }
  return finalize(queries.timestamp, entity_count, std::move(edges));
}

void write_edge_list(const std::string& path, const ViewSubgraph& graph) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write edge list: " + path);
  for (const auto& e : graph.edges) {
    os << e.subject << ' ' << e.relation << ' ' << e.object;
    if (e.delta_t > 0) os << ' ' << e.delta_t;
    os << '\n';
  }
  if (!os) throw DataError("write failed: " + path);
}

Timeline Timeline::merge(std::initializer_list<const SnapshotSequence*> splits) {
  Timeline tl;
  for (const auto* seq : splits)
    tl.snapshots.insert(tl.snapshots.end(), seq->begin(), seq->end());
  std::sort(tl.snapshots.begin(), tl.snapshots.end(),
            [](const Snapshot& a, const Snapshot& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 1; i < tl.snapshots.size(); ++i)
    if (tl.snapshots[i - 1].timestamp == tl.snapshots[i].timestamp)
      throw DataError("timeline: duplicate snapshot timestamp " +
                      std::to_string(tl.snapshots[i].timestamp));
  return tl;
}

std::vector<const Snapshot*> Timeline::window_before(i64 t_q, int window_len) const {
  std::vector<const Snapshot*> window;
  for (auto it = snapshots.rbegin(); it != snapshots.rend(); ++it) {
    if (it->timestamp >= t_q) continue;
    window.push_back(&*it);
    if (static_cast<int>(window.size()) == window_len) break;
  }
  std::reverse(window.begin(), window.end());
  return window;
}

ViewProvider::ViewProvider(const Timeline* timeline, const RuleIndex* rules, i64 entity_count,
                           ViewProviderConfig cfg)
    : timeline_(timeline), rules_(rules), entity_count_(entity_count), cfg_(cfg) {}

const std::pair<ViewSubgraph, ViewSubgraph>& ViewProvider::views(i64 t_q, const QuerySet& queries) {
  auto it = cache_.find(t_q);
  if (it != cache_.end()) return it->second;
  while (next_snapshot_ < timeline_->snapshots.size() &&
         timeline_->snapshots[next_snapshot_].timestamp < t_q) {
    history_.add_snapshot(timeline_->snapshots[next_snapshot_]);
    ++next_snapshot_;
  }
  std::pair<ViewSubgraph, ViewSubgraph> views;
  if (cfg_.need_invariance) views.first = build_invariance(queries, history_, entity_count_);
  if (cfg_.need_dynamics) {
    views.second = cfg_.simple_dynamics
                       ? build_dynamics_simple(queries, history_, cfg_.cap, entity_count_)
                       : build_dynamics(queries, history_, *rules_, cfg_.cap, entity_count_);
  }
  return cache_.emplace(t_q, std::move(views)).first->second;
}

}  // namespace dualtkg
