#include "dualtkg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>

#include "dualtkg/checkpoint.hpp"

namespace dualtkg {

namespace {

ViewProviderConfig provider_config(const RunConfig& cfg) {
  const VariantFlags flags = VariantFlags::from_tag(cfg.variant);
  ViewProviderConfig vc;
  vc.cap = cfg.cap;
  vc.simple_dynamics = flags.simple_dynamics;
  vc.need_invariance = flags.use_invariance;
  vc.need_dynamics = flags.use_dynamics;
  return vc;
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, const Dataset& dataset, const RuleIndex& rules)
    : cfg_(cfg),
      data_(&dataset),
      rules_(&rules),
      model_(cfg.model_config(), dataset.vocab.entity_count,
             dataset.vocab.augmented_relation_count(), cfg.seed),
      train_timeline_(Timeline::merge({&dataset.train})),
      eval_timeline_(Timeline::merge({&dataset.train, &dataset.valid, &dataset.test})),
      train_views_(&train_timeline_, &rules, dataset.vocab.entity_count, provider_config(cfg)),
      eval_views_(&eval_timeline_, &rules, dataset.vocab.entity_count, provider_config(cfg)) {
  cfg_.validate();
  // time-aware filter: all objects known for (s, r, t) across every split
  i64 max_t = 0;
  for (const auto* split : {&dataset.train, &dataset.valid, &dataset.test})
    for (const auto& snap : *split) max_t = std::max(max_t, snap.timestamp);
  filter_time_span_ = max_t + 1;
  const i64 relations = dataset.vocab.augmented_relation_count();
  for (const auto* split : {&dataset.train, &dataset.valid, &dataset.test})
    for (const auto& snap : *split)
      for (const auto& f : snap.facts) {
        const std::uint64_t key =
            (static_cast<std::uint64_t>(f.subject) * static_cast<std::uint64_t>(relations) +
             static_cast<std::uint64_t>(f.relation)) *
                static_cast<std::uint64_t>(filter_time_span_) +
            static_cast<std::uint64_t>(f.timestamp);
        filter_[key].push_back(f.object);
      }
}

std::vector<i64> Trainer::known_objects(i64 subject, i64 relation, i64 timestamp) const {
  const std::uint64_t key =
      (static_cast<std::uint64_t>(subject) *
           static_cast<std::uint64_t>(data_->vocab.augmented_relation_count()) +
       static_cast<std::uint64_t>(relation)) *
          static_cast<std::uint64_t>(filter_time_span_) +
      static_cast<std::uint64_t>(timestamp);
  auto it = filter_.find(key);
  return it == filter_.end() ? std::vector<i64>{} : it->second;
}

Model::Batch Trainer::make_batch(const QuerySet& queries, const Timeline& timeline,
                                 ViewProvider& provider) {
  Model::Batch batch;
  batch.t_q = queries.timestamp;
  batch.queries = &queries;
  batch.window = timeline.window_before(queries.timestamp, cfg_.history_window);
  const auto& views = provider.views(queries.timestamp, queries);
  batch.invariance = &views.first;
  batch.dynamics = &views.second;
  return batch;
}

double Trainer::train_epoch(int epoch, Adam& optimizer) {
  double total = 0.0;
  i64 steps = 0;
  for (const auto& snap : data_->train) {
    const QuerySet queries = queries_of(snap);
    Model::Batch batch = make_batch(queries, train_timeline_, train_views_);
    Rng step_rng = Rng(cfg_.seed).fork(static_cast<std::uint64_t>(1000 + epoch))
                       .fork(static_cast<std::uint64_t>(snap.timestamp));
    optimizer.zero_grad();
    {
      Tape tape;
      Tape::Scope scope(tape);
      auto result = model_.run(batch, true, step_rng, true);
      const double loss = result.losses.total.item();
      if (!std::isfinite(loss))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           ", timestamp " + std::to_string(snap.timestamp));
      backward(result.losses.total);
      total += loss;
      ++steps;
    }
    optimizer.step();
  }
  return steps ? total / static_cast<double>(steps) : 0.0;
}

MetricReport Trainer::evaluate_snapshots(const SnapshotSequence& split) {
  if (split.empty()) throw DataError("evaluate: split is empty");
  std::vector<i64> ranks;
  const i64 entity_count = data_->vocab.entity_count;
  for (const auto& snap : split) {
    const QuerySet queries = queries_of(snap);
    Model::Batch batch = make_batch(queries, eval_timeline_, eval_views_);
    auto result = model_.run(batch, false, Rng(0), false);
    const double* logits = result.entity_logits.data();
    for (std::size_t i = 0; i < queries.entity_queries.size(); ++i) {
      const auto& q = queries.entity_queries[i];
      std::span<const double> row(logits + static_cast<i64>(i) * entity_count,
                                  static_cast<std::size_t>(entity_count));
      ranks.push_back(
          filtered_rank(row, q.gold_object, known_objects(q.subject, q.relation, snap.timestamp)));
    }
  }
  return aggregate(ranks);
}

MetricReport Trainer::evaluate_split(const std::string& split) {
  if (split == "valid") return evaluate_snapshots(data_->valid);
  if (split == "test") return evaluate_snapshots(data_->test);
  throw ConfigError("evaluate: unknown split '" + split + "'");
}

TrainOutcome Trainer::train(const std::string& out_dir) {
  if (data_->valid.empty()) throw DataError("training requires a validation split");
  Adam optimizer(model_.params(),
                 AdamConfig{cfg_.lr, cfg_.weight_decay, 0.9, 0.999, 1e-8});
  TrainOutcome outcome;
  std::vector<std::vector<double>> best_params;
  int since_improve = 0;

  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log.open(std::filesystem::path(out_dir) / "train_log.csv", std::ios::trunc);
    log << "epoch,mean_loss,valid_mrr,improved\n";
  }

  for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = train_epoch(epoch, optimizer);
    stats.valid_mrr = evaluate_split("valid").mrr;
    stats.improved = stats.valid_mrr > outcome.best_valid_mrr;
    if (stats.improved) {
      outcome.best_valid_mrr = stats.valid_mrr;
      outcome.best_epoch = epoch;
      since_improve = 0;
      best_params.clear();
      for (const auto& [name, t] : model_.params().entries())
        best_params.push_back(t.impl()->data);
      if (!out_dir.empty()) {
        outcome.checkpoint_path =
            (std::filesystem::path(out_dir) / "checkpoint.bin").string();
        save_checkpoint(outcome.checkpoint_path, model_.params(), &optimizer, cfg_.to_kv());
      }
    } else {
      ++since_improve;
    }
    outcome.history.push_back(stats);
    outcome.epochs_run = epoch;
    if (log)
      log << epoch << ',' << stats.mean_loss << ',' << stats.valid_mrr << ','
          << (stats.improved ? 1 : 0) << '\n';
    if (since_improve >= cfg_.patience) break;
  }

  // leave the model holding the best validated weights
  if (!best_params.empty()) {
    const auto& entries = model_.params().entries();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      entries[i].second.impl()->data = best_params[i];
      entries[i].second.impl()->grad.clear();
    }
  }
  return outcome;
}

std::vector<Trainer::RobustnessPoint> Trainer::robustness_sweep(
    const std::vector<double>& noise_levels, std::uint64_t noise_seed) {
  for (double sigma : noise_levels)
    if (sigma < 0.0) throw ConfigError("robustness: negative noise level");
  const MetricReport clean = evaluate_split("test");
  Tensor base = model_.base_entities();
  const std::vector<double> saved = base.impl()->data;
  Rng rng(noise_seed);
  std::vector<double> unit_noise(saved.size());
  for (auto& v : unit_noise) v = rng.normal();

  std::vector<RobustnessPoint> points;
  for (double sigma : noise_levels) {
    RobustnessPoint point;
    point.sigma = sigma;
    if (sigma == 0.0) {
      base.impl()->data = saved;
      point.report = clean;
    } else {
      for (std::size_t i = 0; i < saved.size(); ++i)
        base.impl()->data[i] = saved[i] + sigma * unit_noise[i];
      point.report = evaluate_split("test");
    }
    point.degradation_percent =
        clean.mrr > 0.0 ? 100.0 * (clean.mrr - point.report.mrr) / clean.mrr : 0.0;
    points.push_back(point);
  }
  base.impl()->data = saved;
  return points;
}

void Trainer::restore(const Checkpoint& ckpt) { restore_params(model_.params(), ckpt); }

MetricReport run_ablation(const RunConfig& base_config, const std::string& variant_tag,
                          const Dataset& dataset, const RuleIndex& rules, TrainOutcome* outcome) {
  RunConfig cfg = base_config;
  cfg.variant = variant_tag;
  cfg.validate();
  Trainer trainer(cfg, dataset, rules);
  TrainOutcome oc = trainer.train("");
  if (outcome) *outcome = oc;
  return trainer.evaluate_split("test");
}

void write_manifest(const std::string& out_dir, const RunConfig& cfg,
                    const std::string& rules_path_used) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::ofstream os(fs::path(out_dir) / "manifest.txt", std::ios::trunc);
  if (!os) throw DataError("cannot write manifest in " + out_dir);
  char buf[32];
  os << "# run manifest: config echo + input checksums\n" << cfg.to_kv();
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(dataset_checksum(cfg.data_dir)));
  os << "dataset_checksum=" << buf << '\n';
  if (!rules_path_used.empty()) {
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(file_checksum(rules_path_used)));
    os << "rules_checksum=" << buf << '\n';
  }
  if (!os) throw DataError("manifest write failed in " + out_dir);
}

}  // namespace dualtkg
