#include "dualtkg/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace dualtkg {

namespace {

namespace fs = std::filesystem;

// Lines are "name \t id"; ids must form a dense [0, n) range.
std::vector<std::string> read_id_map(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open id map: " + path);
  std::vector<std::pair<i64, std::string>> pairs;
  std::string line;
  i64 lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    i64 id;
    if (!(ls >> name >> id))
      throw DataError("malformed line " + std::to_string(lineno) + " in " + path);
    pairs.emplace_back(id, name);
  }
  std::vector<std::string> names(pairs.size());
  std::vector<bool> seen(pairs.size(), false);
  for (auto& [id, name] : pairs) {
    if (id < 0 || id >= static_cast<i64>(pairs.size()) || seen[static_cast<std::size_t>(id)])
      throw DataError("id map is not dense in " + path + " (id " + std::to_string(id) + ")");
    seen[static_cast<std::size_t>(id)] = true;
    names[static_cast<std::size_t>(id)] = std::move(name);
  }
  return names;
}

std::vector<Quadruple> read_quadruples(const std::string& path, const Vocabulary& vocab,
                                       i64 granularity) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open quadruple file: " + path);
  std::vector<Quadruple> facts;
  std::string line;
  i64 lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    i64 s, r, o, t;
    if (!(ls >> s >> r >> o >> t))
      throw DataError("malformed line " + std::to_string(lineno) + " in " + path);
    if (s < 0 || s >= vocab.entity_count || o < 0 || o >= vocab.entity_count)
      throw DataError("unknown entity id at line " + std::to_string(lineno) + " in " + path);
    if (r < 0 || r >= vocab.base_relation_count)
      throw DataError("unknown relation id at line " + std::to_string(lineno) + " in " + path);
    if (t < 0) throw DataError("negative timestamp at line " + std::to_string(lineno) + " in " + path);
    facts.push_back(Quadruple{s, r, o, t / granularity});
  }
  return facts;
}

void check_boundary(const SnapshotSequence& earlier, const SnapshotSequence& later,
                    const char* a, const char* b) {
  if (earlier.empty() || later.empty()) return;
  if (earlier.back().timestamp >= later.front().timestamp)
    throw DataError(std::string("non-monotone split boundaries: max ") + a + " timestamp " +
                    std::to_string(earlier.back().timestamp) + " >= min " + b + " timestamp " +
                    std::to_string(later.front().timestamp));
}

}  // namespace

std::vector<Quadruple> add_inverse(const std::vector<Quadruple>& facts, i64 base_relation_count) {
  std::vector<Quadruple> out;
  out.reserve(facts.size() * 2);
  for (const auto& f : facts) {
    if (f.relation >= base_relation_count)
      throw DataError("add_inverse: input already augmented (relation " +
                      std::to_string(f.relation) + ")");
    out.push_back(f);
  }
  for (const auto& f : facts) out.push_back(inverse_of(f, base_relation_count));
  return out;
}

Quadruple inverse_of(const Quadruple& f, i64 base_relation_count) {
  Quadruple inv = f;
  inv.subject = f.object;
  inv.object = f.subject;
  inv.relation = f.relation < base_relation_count ? f.relation + base_relation_count
                                                  : f.relation - base_relation_count;
  return inv;
}

SnapshotSequence group_into_snapshots(std::vector<Quadruple> facts) {
  std::sort(facts.begin(), facts.end(), [](const Quadruple& a, const Quadruple& b) {
    return std::tie(a.timestamp, a.subject, a.relation, a.object) <
           std::tie(b.timestamp, b.subject, b.relation, b.object);
  });
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
  SnapshotSequence seq;
  for (auto& f : facts) {
    if (seq.empty() || seq.back().timestamp != f.timestamp)
      seq.push_back(Snapshot{f.timestamp, {}});
    seq.back().facts.push_back(f);
  }
  return seq;
}

Dataset load_dataset(const std::string& dir, i64 granularity) {
  if (granularity < 1) throw ConfigError("granularity must be >= 1");
  Dataset ds;
  ds.granularity = granularity;
  ds.source_dir = dir;
  ds.vocab.entity_names = read_id_map((fs::path(dir) / "entity2id.txt").string());
  ds.vocab.relation_names = read_id_map((fs::path(dir) / "relation2id.txt").string());
  ds.vocab.entity_count = static_cast<i64>(ds.vocab.entity_names.size());
  ds.vocab.base_relation_count = static_cast<i64>(ds.vocab.relation_names.size());

  auto load_split = [&](const char* file, i64& raw_count) {
    auto raw = read_quadruples((fs::path(dir) / file).string(), ds.vocab, granularity);
    // the paper treats facts as sets: dedup before counting the augmentation
    auto grouped = group_into_snapshots(std::move(raw));
    std::vector<Quadruple> deduped;
    for (auto& snap : grouped)
      deduped.insert(deduped.end(), snap.facts.begin(), snap.facts.end());
    raw_count = static_cast<i64>(deduped.size());
    return group_into_snapshots(add_inverse(deduped, ds.vocab.base_relation_count));
  };
  ds.train = load_split("train.txt", ds.raw_train_facts);
  ds.valid = load_split("valid.txt", ds.raw_valid_facts);
  ds.test = load_split("test.txt", ds.raw_test_facts);

  check_boundary(ds.train, ds.valid, "train", "valid");
  check_boundary(ds.valid, ds.test, "valid", "test");
  check_boundary(ds.train, ds.test, "train", "test");
  return ds;
}

QuerySet queries_of(const Snapshot& snap) {
  QuerySet qs;
  qs.timestamp = snap.timestamp;
  qs.entity_queries.reserve(snap.facts.size());
  qs.relation_queries.reserve(snap.facts.size());
  for (const auto& f : snap.facts) {
    qs.entity_queries.push_back(EntityQuery{f.subject, f.relation, f.object});
    qs.relation_queries.push_back(RelationQuery{f.subject, f.object, f.relation});
  }
  return qs;
}

QuerySet queries_at(const SnapshotSequence& split, i64 t_q) {
  for (const auto& snap : split)
    if (snap.timestamp == t_q) return queries_of(snap);
  throw DataError("queries_at: no snapshot at timestamp " + std::to_string(t_q));
}

void write_quadruple_file(const std::string& path, const std::vector<Quadruple>& facts,
                          i64 granularity) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write: " + path);
  for (const auto& f : facts)
    os << f.subject << '\t' << f.relation << '\t' << f.object << '\t'
       << f.timestamp * granularity << '\n';
  if (!os) throw DataError("write failed: " + path);
}

void write_id_map_file(const std::string& path, const std::vector<std::string>& names) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("cannot write: " + path);
  for (std::size_t i = 0; i < names.size(); ++i) os << names[i] << '\t' << i << '\n';
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace dualtkg
