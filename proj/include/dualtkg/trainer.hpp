#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dualtkg/checkpoint.hpp"
#include "dualtkg/config.hpp"
#include "dualtkg/data.hpp"
#include "dualtkg/eval.hpp"
#include "dualtkg/graphs.hpp"
#include "dualtkg/model.hpp"
#include "dualtkg/optim.hpp"
#include "dualtkg/rules.hpp"

namespace dualtkg {

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double valid_mrr = 0.0;
  bool improved = false;
};

struct TrainOutcome {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_valid_mrr = -1.0;
  std::vector<EpochStats> history;
  std::string checkpoint_path;  // empty when no out_dir was given
};

// Chronological training with early stopping on validation MRR, plus the
// shared evaluation machinery (time-aware filtered ranking) and the
// robustness sweep. History conventions: parameter updates see train facts
// only; evaluation retrieves from everything known before t_q.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const Dataset& dataset, const RuleIndex& rules);

  // out_dir may be empty (no checkpoint/log files written).
  TrainOutcome train(const std::string& out_dir);

  MetricReport evaluate_split(const std::string& split);  // "valid" | "test"

  // Per noise level: N(0, sigma^2) perturbation of the base entity table at
  // inference time, test-split report, then restore.
  struct RobustnessPoint {
    double sigma = 0.0;
    MetricReport report;
    double degradation_percent = 0.0;  // vs the clean run
  };
  std::vector<RobustnessPoint> robustness_sweep(const std::vector<double>& noise_levels,
                                                std::uint64_t noise_seed);

  Model& model() { return model_; }
  const RunConfig& config() const { return cfg_; }
  void restore(const Checkpoint& ckpt);

 private:
  double train_epoch(int epoch, Adam& optimizer);
  MetricReport evaluate_snapshots(const SnapshotSequence& split);
  std::vector<i64> known_objects(i64 subject, i64 relation, i64 timestamp) const;
  Model::Batch make_batch(const QuerySet& queries, const Timeline& timeline,
                          ViewProvider& provider);

  RunConfig cfg_;
  const Dataset* data_;
  const RuleIndex* rules_;
  Model model_;
  Timeline train_timeline_, eval_timeline_;
  ViewProvider train_views_, eval_views_;
  std::unordered_map<std::uint64_t, std::vector<i64>> filter_;
  i64 filter_time_span_ = 0;
};

// Full train+test cycle for one ablation tag on a shared dataset+rules.
MetricReport run_ablation(const RunConfig& base_config, const std::string& variant_tag,
                          const Dataset& dataset, const RuleIndex& rules,
                          TrainOutcome* outcome = nullptr);

// manifest.txt: config echo plus dataset/rule checksums, enough to
// reproduce the run bit for bit.
void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::string& rules_path_used);

}  // namespace dualtkg
