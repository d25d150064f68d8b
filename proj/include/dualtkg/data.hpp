#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualtkg/errors.hpp"

namespace dualtkg {

using i64 = std::int64_t;

// A timestamped fact. `timestamp` is the dense snapshot index
// (raw time divided by the dataset granularity).
struct Quadruple {
  i64 subject = 0;
  i64 relation = 0;
  i64 object = 0;
  i64 timestamp = 0;
  auto operator<=>(const Quadruple&) const = default;
};

struct Snapshot {
  i64 timestamp = 0;
  std::vector<Quadruple> facts;  // sorted, deduplicated, all at `timestamp`
};

using SnapshotSequence = std::vector<Snapshot>;

struct Vocabulary {
  i64 entity_count = 0;
  i64 base_relation_count = 0;
  std::vector<std::string> entity_names;    // metadata only; ids are authoritative
  std::vector<std::string> relation_names;

  i64 augmented_relation_count() const { return 2 * base_relation_count; }
  i64 inverse_relation(i64 r) const {
    return r < base_relation_count ? r + base_relation_count : r - base_relation_count;
  }
};

// Facts of one split grouped by timestamp; augmented with inverse relations.
struct Dataset {
  Vocabulary vocab;
  SnapshotSequence train, valid, test;
  i64 granularity = 1;
  i64 raw_train_facts = 0, raw_valid_facts = 0, raw_test_facts = 0;  // before augmentation
  std::string source_dir;
};

// Reads train/valid/test quadruple files plus entity2id/relation2id maps,
// divides raw timestamps by `granularity`, dedups per snapshot, and adds
// inverse relations.
Dataset load_dataset(const std::string& dir, i64 granularity);

// (s, r, o, t) -> adds (o, r + |R|, s, t) for every fact. Rejects input
// that already contains relations >= |R|.
std::vector<Quadruple> add_inverse(const std::vector<Quadruple>& facts, i64 base_relation_count);

Quadruple inverse_of(const Quadruple& f, i64 base_relation_count);

// Group a sorted-or-not fact list into a deduplicated time-ordered sequence.
SnapshotSequence group_into_snapshots(std::vector<Quadruple> facts);

struct EntityQuery {
  i64 subject = 0;
  i64 relation = 0;
  i64 gold_object = 0;
};

struct RelationQuery {
  i64 subject = 0;
  i64 object = 0;
  i64 gold_relation = 0;
};

// All prediction queries at one timestamp, derived 1:1 from its facts
// (which already include the inverse direction).
struct QuerySet {
  i64 timestamp = 0;
  std::vector<EntityQuery> entity_queries;
  std::vector<RelationQuery> relation_queries;
};

// Throws DataError when t_q has no snapshot in `split`.
QuerySet queries_at(const SnapshotSequence& split, i64 t_q);

QuerySet queries_of(const Snapshot& snap);

// Plain TSV writers used by the synthetic generator and tests.
void write_quadruple_file(const std::string& path, const std::vector<Quadruple>& facts,
                          i64 granularity);
void write_id_map_file(const std::string& path, const std::vector<std::string>& names);

}  // namespace dualtkg
