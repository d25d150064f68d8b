#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dualtkg/data.hpp"

namespace dualtkg {

// "(A, trigger, B, t) implies (A, response, B, t+lag)" planted pattern.
struct RecurrencePattern {
  i64 trigger_relation = 0;
  i64 response_relation = 1;
  i64 lag = 1;
};

// Deterministic toy TKG: trigger pairs fire periodically and imply a
// delayed response (suppressed with probability `noise`); the remaining
// relations cycle periodically on their own pairs as background traffic.
struct SyntheticSpec {
  i64 entities = 20;
  i64 relations = 5;
  i64 timestamps = 60;
  std::vector<RecurrencePattern> patterns = {RecurrencePattern{}};
  double noise = 0.1;
  i64 trigger_pairs = 12;
  i64 background_pairs = 8;
  i64 trigger_min_period = 5, trigger_max_period = 8;
  i64 background_min_period = 2, background_max_period = 3;
  double train_fraction = 0.8, valid_fraction = 0.1;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticSplits {
  std::vector<Quadruple> train, valid, test;
};

SyntheticSplits generate_synthetic(const SyntheticSpec& spec);

// Writes train/valid/test.txt plus both id maps in the loader's layout.
void write_synthetic_dataset(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace dualtkg
