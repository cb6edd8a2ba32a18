#include "ctune/loop.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ctune/hybrid.hpp"
#include "ctune/persistence.hpp"
#include "ctune/rng.hpp"

namespace ctune {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::max(std::chrono::duration<double>(Clock::now() - t0).count(), 1e-9);
}

ClassSet set_union(const ClassSet& a, const ClassSet& b) {
  ClassSet out = a;
  out.insert(b.begin(), b.end());
  return out;
}

std::map<ClassId, ProbabilityGrid> restrict_to(const std::map<ClassId, ProbabilityGrid>& probs, const ClassSet& keep) {
  std::map<ClassId, ProbabilityGrid> out;
  for (const auto& [k, p] : probs) {
    if (keep.count(k)) out.emplace(k, p);
  }
  return out;
}

}  // namespace

ExperimentConfig ExperimentConfig::desk_reference() {
  ExperimentConfig c;
  const ClassSet revise = c.catalog.new_classes();
  c.rounds = {RoundSpec{PoolSource::base, 200, 12, revise}, RoundSpec{PoolSource::fresh, 200, 22, revise}};

  TuningConfig tune = TuningConfig::desk();
  tune.epochs = 20;
  tune.warmup_epochs = 2;
  tune.batch_size = 4;
  tune.reuse_fraction = 0.1;
  tune.seed = 11;

  // Only the small class heads move when the shared network is frozen; they
  // need a larger step to get past the initial all-background phase in 20 epochs.
  TuningConfig heads = tune;
  heads.base_lr = 3e-2;

  Regime continual{"continual_hybrid", heads};
  continual.tuning.data_strategy = DataStrategy::hybrid;
  continual.tuning.freeze_shared = true;

  Regime revised_frozen{"revised_only_frozen", heads};
  revised_frozen.tuning.data_strategy = DataStrategy::revised_only;
  revised_frozen.tuning.freeze_shared = true;

  Regime revised_unfrozen{"revised_only_unfrozen", tune};
  revised_unfrozen.tuning.data_strategy = DataStrategy::revised_only;
  revised_unfrozen.tuning.freeze_shared = false;

  Regime hybrid_unfrozen{"hybrid_unfrozen", tune};
  hybrid_unfrozen.tuning.data_strategy = DataStrategy::hybrid;
  hybrid_unfrozen.tuning.freeze_shared = false;

  Regime full{"full_training", c.base_training};
  full.tuning.data_strategy = DataStrategy::full;
  full.tuning.freeze_shared = false;
  full.tuning.seed = 12;

  c.regimes = {continual, revised_frozen, revised_unfrozen, hybrid_unfrozen, full};
  return c;
}

void ExperimentConfig::validate() const {
  arch.validate();
  validate_phantom_spec(phantom, catalog);
  weights.validate();
  base_training.validate();
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("threshold must lie in (0,1)");
  if (base_train_size < 1 || test_size < 1) throw ContractError("dataset sizes must be >= 1");
  if (catalog.old_classes().empty()) throw ContractError("the catalog needs at least one old class");
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const auto& round = rounds[r];
    const std::size_t pool = round.pool_source == PoolSource::base ? base_train_size : round.pool_size;
    if (round.n_select > pool) {
      throw ContractError("round " + std::to_string(r + 1) + ": n_select exceeds the pool size");
    }
    for (ClassId k : round.classes_to_revise) {
      if (!catalog.contains(k)) throw DomainError("round " + std::to_string(r + 1) + ": unknown class");
    }
  }
  std::set<std::string> names;
  for (const auto& regime : regimes) {
    regime.tuning.validate();
    if (!names.insert(regime.name).second) throw ContractError("duplicate regime name " + regime.name);
  }
}

std::uint64_t ExperimentConfig::model_seed() const { return derive_seed(seed, 1); }
std::uint64_t ExperimentConfig::base_data_seed() const { return derive_seed(seed, 2) % 1000000007ULL; }
std::uint64_t ExperimentConfig::test_data_seed() const { return derive_seed(seed, 3) % 1000000007ULL; }
std::uint64_t ExperimentConfig::validation_data_seed() const { return derive_seed(seed, 4) % 1000000007ULL; }
std::uint64_t ExperimentConfig::pool_seed(std::size_t round_index) const {
  return derive_seed(seed, 100 + round_index) % 1000000007ULL;
}

SpeedupRatios speedup_accounting(double full_scans_per_epoch, double tuned_scans_per_epoch, double full_wall,
                                 double tuned_wall) {
  if (!(tuned_scans_per_epoch > 0.0) || !(tuned_wall > 0.0)) {
    throw ContractError("speedup_accounting: denominators must be > 0");
  }
  return {full_scans_per_epoch / tuned_scans_per_epoch, full_wall / tuned_wall};
}

double mean_over(const std::map<ClassId, double>& values, const ClassSet& classes) {
  if (classes.empty()) return 0.0;
  double s = 0.0;
  for (ClassId k : classes) s += values.at(k);
  return s / static_cast<double>(classes.size());
}

ExperimentData generate_experiment_data(const ExperimentConfig& config) {
  ExperimentData data;
  data.base = generate_dataset(config.base_data_seed(), config.base_train_size, config.phantom, config.catalog).scans;
  data.test = generate_dataset(config.test_data_seed(), config.test_size, config.phantom, config.catalog).scans;
  if (config.validation_size > 0) {
    data.validation =
        generate_dataset(config.validation_data_seed(), config.validation_size, config.phantom, config.catalog).scans;
  }
  return data;
}

std::vector<Scan> round_pool(const ExperimentConfig& config, const ExperimentData& data, std::size_t round_index) {
  const RoundSpec& round = config.rounds.at(round_index);
  if (round.pool_source == PoolSource::base) {
    std::vector<Scan> pool = data.base;
    for (auto& s : pool) s.annotations.clear();
    return pool;
  }
  return generate_dataset(config.pool_seed(round_index), round.pool_size, config.phantom, config.catalog).scans;
}

BaseModel train_base(const ExperimentConfig& config, const std::vector<Scan>& base_scans,
                     const std::vector<Scan>* validation) {
  config.base_training.validate();
  const ClassSet& old_classes = config.catalog.old_classes();
  DatasetView view;
  for (const auto& s : base_scans) {
    AnnotationSet target;
    for (ClassId k : old_classes) {
      auto it = s.ground_truth.channels.find(k);
      if (it == s.ground_truth.channels.end()) {
        throw ContractError("train_base: " + s.scan_id + " lacks old class " + std::to_string(k));
      }
      target.put(it->second);
    }
    view.push_back({s.scan_id, s.image, std::move(target)});
  }
  TuningConfig tuning = config.base_training;
  tuning.data_strategy = DataStrategy::full;
  tuning.freeze_shared = false;
  ModelParams params = init_model(config.model_seed(), config.arch, config.catalog);
  const Partition partition = all_trainable(params);
  TrainOptions opts;
  opts.validation = validation;
  opts.validation_classes = old_classes;
  TrainResult result = train(std::move(params), view, tuning, partition, opts);
  return {std::move(result.params), std::move(result.history)};
}

Partition tuning_partition(const ModelParams& params, const TuningConfig& tuning, const ClassSet& revised) {
  if (tuning.freeze_shared) return parameter_partition(params, revised, !tuning.freeze_embeddings);
  Partition partition = all_trainable(params);
  if (tuning.freeze_embeddings) {
    for (auto it = partition.trainable.begin(); it != partition.trainable.end();) {
      if (it->ends_with(names::kEmbedding)) {
        partition.frozen.insert(*it);
        it = partition.trainable.erase(it);
      } else {
        ++it;
      }
    }
  }
  return partition;
}

RoundOutcome run_round(const ModelParams& params, std::vector<Scan> pool, const RoundSpec& round,
                       const TuningConfig& tuning, const RoundContext& ctx) {
  const auto t0 = Clock::now();
  RoundOutcome outcome;
  RoundRecord& rec = outcome.record;
  rec.data_strategy = tuning.data_strategy;
  rec.freeze_shared = tuning.freeze_shared;
  rec.classes_revised = round.classes_to_revise;
  rec.pool_size = pool.size();
  outcome.learned_classes = ctx.learned_classes;
  try {
    if (!ctx.catalog || !ctx.test) throw ContractError("run_round: catalog and test set are required");
    tuning.validate();
    if (pool.empty()) throw ContractError("run_round: empty pool");
    if (round.n_select > pool.size()) throw ContractError("run_round: n_select exceeds pool size");
    const ClassSet all = ctx.catalog->all_ids();
    for (ClassId k : round.classes_to_revise) {
      if (!ctx.catalog->contains(k)) throw DomainError("run_round: unknown class " + std::to_string(k));
    }
    rec.dsc_before = evaluate(params, *ctx.test, all, ctx.threshold);

    // Inference and importance scoring; one inference per scan per round.
    const ClassSet scored = set_union(ctx.learned_classes, round.classes_to_revise);
    const auto augmentations = default_augmentations();
    for (auto& scan : pool) {
      const auto probs = predict(params, scan.image, scored);
      scan.annotations[std::string(kTagPredicted)] =
          binarize_predictions(restrict_to(probs, ctx.learned_classes), ctx.threshold);
      ScanScore score;
      score.scan_id = scan.scan_id;
      score.u = uncertainty_score(probs);
      score.c = consistency_score(params, scan.image, scored, augmentations);
      score.o = overlap_score(binarize_predictions(probs, ctx.threshold));
      score.importance = importance(score.u, score.c, score.o, ctx.weights);
      rec.scores.push_back(score);
    }
    rec.selected_scan_ids = select_for_revision(rec.scores, round.n_select);

    if (rec.selected_scan_ids.empty()) {
      rec.dsc_after = rec.dsc_before;
      outcome.params = params;
      rec.wall_time_seconds = seconds_since(t0);
      return outcome;
    }

    std::map<std::string, std::size_t> index_of;
    for (std::size_t i = 0; i < pool.size(); ++i) index_of[pool[i].scan_id] = i;
    std::set<std::string> selected(rec.selected_scan_ids.begin(), rec.selected_scan_ids.end());

    std::vector<Scan> revised_scans;
    for (const auto& id : rec.selected_scan_ids) {
      Scan& scan = pool[index_of.at(id)];
      AnnotationSet revised = oracle_revise(scan, AnnotationSet{}, round.classes_to_revise);
      scan.annotations[std::string(kTagHybrid)] =
          merge_hybrid(scan.annotations.at(std::string(kTagPredicted)), revised);
      scan.annotations[std::string(kTagRevised)] = std::move(revised);
      revised_scans.push_back(scan);
    }

    std::vector<Scan> reuse_scans;
    if (tuning.data_strategy == DataStrategy::hybrid && tuning.reuse_fraction > 0.0) {
      std::vector<ScanScore> previous;
      for (const auto& s : rec.scores) {
        if (!selected.count(s.scan_id)) previous.push_back(s);
      }
      rec.reused_scan_ids = select_reuse(previous, tuning.reuse_fraction);
      for (const auto& id : rec.reused_scan_ids) reuse_scans.push_back(pool[index_of.at(id)]);
    } else if (tuning.data_strategy == DataStrategy::full) {
      for (const auto& s : pool) {
        if (!selected.count(s.scan_id)) reuse_scans.push_back(s);
      }
    }
    const DatasetView view = build_training_view(revised_scans, reuse_scans, tuning.data_strategy);

    TuningConfig effective = tuning;
    ModelParams start = params;
    if (tuning.data_strategy == DataStrategy::full) {
      start = init_model(ctx.init_seed, params.arch, *ctx.catalog);
      effective.freeze_shared = false;
    }
    const Partition partition = tuning_partition(start, effective, round.classes_to_revise);

    TrainOptions opts;
    opts.validation = ctx.validation;
    opts.validation_classes = all;
    TrainResult result = train(std::move(start), view, effective, partition, opts);

    rec.dsc_after = evaluate(result.params, *ctx.test, all, ctx.threshold);
    rec.scans_processed_per_epoch = view.size();
    double wall = 0.0;
    for (const auto& e : result.history.epochs) wall += e.wall_time_seconds;
    rec.train_seconds_per_epoch = wall / static_cast<double>(result.history.epochs.size());
    rec.history = std::move(result.history);
    outcome.params = std::move(result.params);
    outcome.learned_classes = set_union(ctx.learned_classes, round.classes_to_revise);
  } catch (const Error& e) {
    rec.status = std::string("failed: ") + e.what();
    outcome.params = params;
    outcome.learned_classes = ctx.learned_classes;
  }
  rec.wall_time_seconds = seconds_since(t0);
  return outcome;
}

std::string render_report(const ExperimentConfig& config, const std::vector<RoundRecord>& records) {
  std::ostringstream out;
  out << "# format_version: " << kFormatVersion << "\n";
  out << "regime,data_strategy,freeze_shared,round,status,class_id,class_name,group,dsc_before,dsc_after,"
         "n_selected,view_size\n";
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& r : records) {
    for (const auto& c : config.catalog.classes()) {
      std::string group = config.catalog.old_classes().count(c.id) ? "old" : "new";
      if (r.classes_revised.count(c.id)) group = "revised";
      const auto b = r.dsc_before.find(c.id);
      const auto a = r.dsc_after.find(c.id);
      const std::string status = r.status == "ok" ? "ok" : "failed";
      out << r.regime << ',' << to_string(r.data_strategy) << ',' << (r.freeze_shared ? "on" : "off") << ','
          << r.round_index << ',' << status << ',' << c.id << ',' << c.name << ',' << group << ','
          << (b != r.dsc_before.end() ? fmt(b->second) : "") << ','
          << (a != r.dsc_after.end() ? fmt(a->second) : "") << ',' << r.selected_scan_ids.size() << ','
          << r.scans_processed_per_epoch << '\n';
    }
  }
  return out.str();
}

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  const auto t_start = Clock::now();
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  if (options.start_round < 1 || options.start_round > config.rounds.size() + 1) {
    throw ContractError("run_experiment: start_round out of range");
  }

  std::optional<RunDirectory> run_dir;
  if (options.out_dir) run_dir.emplace(*options.out_dir, config.catalog);

  log("generating phantoms");
  const ExperimentData data = generate_experiment_data(config);
  const ClassSet all = config.catalog.all_ids();

  ExperimentResult result;
  ModelParams start;
  if (options.start_params) {
    start = *options.start_params;
  } else {
    log("training base model");
    BaseModel base = train_base(config, data.base, data.validation.empty() ? nullptr : &data.validation);
    start = std::move(base.params);
    result.base_history = std::move(base.history);
    if (run_dir) {
      Checkpoint ck;
      ck.params = start;
      ck.provenance.regime = "base";
      ck.provenance.round = 0;
      ck.provenance.epoch = config.base_training.epochs;
      ck.provenance.config_digest = config_digest(config);
      ck.provenance.learned_classes = config.catalog.old_classes();
      save_checkpoint(run_dir->path() / "checkpoints" / "base.ckpt", ck);
      run_dir->append_history("base", 0, result.base_history);
    }
  }
  result.base_test_dsc = evaluate(start, data.test, all, config.threshold);
  result.start_params = start;
  const ClassSet start_learned = options.start_learned.value_or(config.catalog.old_classes());

  std::vector<std::vector<Scan>> pools(config.rounds.size());
  for (std::size_t r = options.start_round - 1; r < config.rounds.size(); ++r) pools[r] = round_pool(config, data, r);

  for (const auto& regime : config.regimes) {
    if (!options.regimes.empty() &&
        std::find(options.regimes.begin(), options.regimes.end(), regime.name) == options.regimes.end()) {
      continue;
    }
    ModelParams params = start;
    ClassSet learned = start_learned;
    for (std::size_t r = options.start_round - 1; r < config.rounds.size(); ++r) {
      log("regime " + regime.name + ", round " + std::to_string(r + 1));
      TuningConfig tuning = regime.tuning;
      tuning.seed = derive_seed(regime.tuning.seed, r + 1);
      RoundContext ctx;
      ctx.catalog = &config.catalog;
      ctx.test = &data.test;
      ctx.validation = data.validation.empty() ? nullptr : &data.validation;
      ctx.learned_classes = learned;
      ctx.weights = config.weights;
      ctx.threshold = config.threshold;
      ctx.init_seed = config.model_seed();
      RoundOutcome outcome = run_round(params, pools[r], config.rounds[r], tuning, ctx);
      RoundRecord& rec = outcome.record;
      rec.regime = regime.name;
      rec.round_index = static_cast<int>(r + 1);
      rec.timestamp_seconds = seconds_since(t_start);
      const std::string ck_name = regime.name + "_round" + std::to_string(r + 1) + ".ckpt";
      if (run_dir) {
        Checkpoint ck;
        ck.params = outcome.params;
        ck.provenance.regime = regime.name;
        ck.provenance.round = static_cast<int>(r + 1);
        ck.provenance.epoch = static_cast<int>(rec.history.epochs.size());
        ck.provenance.config_digest = config_digest(config);
        ck.provenance.learned_classes = outcome.learned_classes;
        save_checkpoint(run_dir->path() / "checkpoints" / ck_name, ck);
        rec.checkpoint = "checkpoints/" + ck_name;
        run_dir->append_round(rec);
        run_dir->append_history(regime.name, rec.round_index, rec.history);
      } else {
        rec.checkpoint = "memory:" + regime.name + "/round" + std::to_string(r + 1);
      }
      if (rec.status != "ok") log("round failed: " + rec.status);
      params = std::move(outcome.params);
      learned = std::move(outcome.learned_classes);
      result.records.push_back(std::move(rec));
    }
    result.final_params.emplace(regime.name, std::move(params));
  }

  result.report_csv = render_report(config, result.records);
  if (run_dir) {
    write_text_file(run_dir->path() / "report.csv", result.report_csv);
    write_text_file(run_dir->path() / "scores.csv", render_round_scores(result.records));
  }
  return result;
}

}  // namespace ctune
