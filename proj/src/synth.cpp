#include "dualtkg/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <set>

#include "dualtkg/rng.hpp"

namespace dualtkg {

namespace {

struct PairSchedule {
  i64 subject, object, period, phase;
};

std::vector<PairSchedule> draw_pairs(i64 count, i64 entities, i64 min_period, i64 max_period,
                                     std::set<std::pair<i64, i64>>& used, Rng& rng) {
  std::vector<PairSchedule> out;
  while (static_cast<i64>(out.size()) < count) {
    const i64 a = rng.uniform_int(entities);
    const i64 b = rng.uniform_int(entities);
    if (a == b || !used.insert({a, b}).second) continue;
    const i64 period = min_period + rng.uniform_int(max_period - min_period + 1);
    out.push_back(PairSchedule{a, b, period, rng.uniform_int(period)});
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (entities < 2) throw ConfigError("synth: need at least 2 entities");
  if (relations < 1) throw ConfigError("synth: need at least 1 relation");
  if (timestamps < 10) throw ConfigError("synth: need at least 10 timestamps");
  if (noise < 0.0 || noise >= 1.0) throw ConfigError("synth: noise must be in [0,1)");
  if (train_fraction <= 0 || valid_fraction <= 0 || train_fraction + valid_fraction >= 1.0)
    throw ConfigError("synth: bad split fractions");
  for (const auto& p : patterns) {
    if (p.trigger_relation < 0 || p.trigger_relation >= relations || p.response_relation < 0 ||
        p.response_relation >= relations || p.lag < 1)
      throw ConfigError("synth: pattern references unknown relation or bad lag");
  }
}

SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  std::set<std::pair<i64, i64>> used;
  std::vector<Quadruple> facts;

  // pattern relations fire on shared pair schedules
  std::set<i64> patterned;
  for (const auto& p : spec.patterns) {
    patterned.insert(p.trigger_relation);
    patterned.insert(p.response_relation);
  }
  for (const auto& p : spec.patterns) {
    auto pairs = draw_pairs(spec.trigger_pairs, spec.entities, spec.trigger_min_period,
                            spec.trigger_max_period, used, rng);
    for (const auto& sched : pairs) {
      for (i64 t = sched.phase; t + p.lag < spec.timestamps; t += sched.period) {
        facts.push_back(Quadruple{sched.subject, p.trigger_relation, sched.object, t});
        if (rng.uniform() >= spec.noise)
          facts.push_back(Quadruple{sched.subject, p.response_relation, sched.object, t + p.lag});
      }
    }
  }
  // the remaining relations provide periodic background traffic
  for (i64 r = 0; r < spec.relations; ++r) {
    if (patterned.count(r)) continue;
    auto pairs = draw_pairs(spec.background_pairs, spec.entities, spec.background_min_period,
                            spec.background_max_period, used, rng);
    for (const auto& sched : pairs)
      for (i64 t = sched.phase; t < spec.timestamps; t += sched.period)
        facts.push_back(Quadruple{sched.subject, r, sched.object, t});
  }

  const i64 train_end = static_cast<i64>(spec.train_fraction * static_cast<double>(spec.timestamps));
  const i64 valid_end = static_cast<i64>((spec.train_fraction + spec.valid_fraction) *
                                         static_cast<double>(spec.timestamps));
  SyntheticSplits splits;
  for (const auto& f : facts) {
    if (f.timestamp < train_end)
      splits.train.push_back(f);
    else if (f.timestamp < valid_end)
      splits.valid.push_back(f);
    else
      splits.test.push_back(f);
  }
  auto chrono = [](std::vector<Quadruple>& v) {
    std::sort(v.begin(), v.end(), [](const Quadruple& a, const Quadruple& b) {
      return std::tie(a.timestamp, a.subject, a.relation, a.object) <
             std::tie(b.timestamp, b.subject, b.relation, b.object);
    });
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  chrono(splits.train);
  chrono(splits.valid);
  chrono(splits.test);
  if (splits.train.empty() || splits.valid.empty() || splits.test.empty())
    throw ConfigError("synth: a split came out empty; increase timestamps or pair counts");
  return splits;
}

void write_synthetic_dataset(const SyntheticSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const auto splits = generate_synthetic(spec);
  write_quadruple_file((fs::path(out_dir) / "train.txt").string(), splits.train, 1);
  write_quadruple_file((fs::path(out_dir) / "valid.txt").string(), splits.valid, 1);
  write_quadruple_file((fs::path(out_dir) / "test.txt").string(), splits.test, 1);
  std::vector<std::string> entities, relations;
  for (i64 i = 0; i < spec.entities; ++i) entities.push_back("entity_" + std::to_string(i));
  for (i64 i = 0; i < spec.relations; ++i) relations.push_back("relation_" + std::to_string(i));
  write_id_map_file((fs::path(out_dir) / "entity2id.txt").string(), entities);
  write_id_map_file((fs::path(out_dir) / "relation2id.txt").string(), relations);
}

}  // namespace dualtkg
