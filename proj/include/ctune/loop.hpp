#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctune/domain.hpp"
#include "ctune/importance.hpp"
#include "ctune/model.hpp"
#include "ctune/phantom.hpp"
#include "ctune/train.hpp"

namespace ctune {

enum class PoolSource { base, fresh };

struct RoundSpec {
  PoolSource pool_source = PoolSource::fresh;
  std::size_t pool_size = 200;  // ignored for PoolSource::base
  std::size_t n_select = 12;
  ClassSet classes_to_revise;
};

struct Regime {
  std::string name;
  TuningConfig tuning;
};

struct ExperimentConfig {
  ClassCatalog catalog = ClassCatalog::abdominal();
  PhantomSpec phantom = PhantomSpec::abdominal();
  ArchConfig arch;
  std::size_t base_train_size = 200;
  std::size_t test_size = 50;
  std::size_t validation_size = 16;
  TuningConfig base_training = TuningConfig::desk();
  std::vector<RoundSpec> rounds;
  std::vector<Regime> regimes;
  ImportanceWeights weights;
  double threshold = 0.5;
  std::uint64_t seed = 2024;

  // 9 classes, 200 base / 200 pool / 50 test scans at 64x64; rounds revise
  // the four new classes on 12 then 22 selected scans.
  static ExperimentConfig desk_reference();
  void validate() const;

  std::uint64_t model_seed() const;
  std::uint64_t base_data_seed() const;
  std::uint64_t test_data_seed() const;
  std::uint64_t validation_data_seed() const;
  std::uint64_t pool_seed(std::size_t round_index) const;
};

struct RoundRecord {
  int round_index = 0;
  std::string regime;
  DataStrategy data_strategy = DataStrategy::hybrid;
  bool freeze_shared = true;
  std::string status = "ok";
  std::vector<std::string> selected_scan_ids;
  std::vector<std::string> reused_scan_ids;
  std::vector<ScanScore> scores;
  ClassSet classes_revised;
  std::map<ClassId, double> dsc_before;
  std::map<ClassId, double> dsc_after;
  std::size_t pool_size = 0;
  std::size_t scans_processed_per_epoch = 0;
  double train_seconds_per_epoch = 0.0;
  double wall_time_seconds = 0.0;
  double timestamp_seconds = 0.0;
  std::string checkpoint;
  TrainHistory history;
};

struct RoundContext {
  const ClassCatalog* catalog = nullptr;
  const std::vector<Scan>* test = nullptr;
  const std::vector<Scan>* validation = nullptr;
  ClassSet learned_classes;  // classes the incoming model has been trained on
  ImportanceWeights weights;
  double threshold = 0.5;
  std::uint64_t init_seed = 0;  // used when the full strategy retrains from scratch
};

struct RoundOutcome {
  ModelParams params;
  RoundRecord record;
  ClassSet learned_classes;
};

// freeze_shared: class-specific parts of `revised` only. Otherwise every
// parameter, minus embeddings when freeze_embeddings is set.
Partition tuning_partition(const ModelParams& params, const TuningConfig& tuning, const ClassSet& revised);

// infer -> score -> select -> oracle revise -> merge -> tune -> evaluate.
// A failing stage leaves `params` as the outcome and marks the record failed.
RoundOutcome run_round(const ModelParams& params, std::vector<Scan> pool, const RoundSpec& round,
                       const TuningConfig& tuning, const RoundContext& context);

struct SpeedupRatios {
  double scan_ratio = 0.0;
  double wall_ratio = 0.0;
};

SpeedupRatios speedup_accounting(double full_scans_per_epoch, double tuned_scans_per_epoch, double full_wall,
                                 double tuned_wall);

struct BaseModel {
  ModelParams params;
  TrainHistory history;
};

// Full training from the seeded initialisation on the old classes only.
BaseModel train_base(const ExperimentConfig& config, const std::vector<Scan>& base_scans,
                     const std::vector<Scan>* validation = nullptr);

struct ExperimentData {
  std::vector<Scan> base;
  std::vector<Scan> test;
  std::vector<Scan> validation;
};

ExperimentData generate_experiment_data(const ExperimentConfig& config);
std::vector<Scan> round_pool(const ExperimentConfig& config, const ExperimentData& data, std::size_t round_index);

struct ExperimentOptions {
  std::optional<std::filesystem::path> out_dir;
  std::vector<std::string> regimes;  // empty: every configured regime
  // Resume: start at `start_round` (1-based) from `start_params`.
  std::size_t start_round = 1;
  std::optional<ModelParams> start_params;
  std::optional<ClassSet> start_learned;
  std::function<void(const std::string&)> log;
};

struct ExperimentResult {
  ModelParams start_params;  // the base model, or the resume point
  TrainHistory base_history;
  std::map<ClassId, double> base_test_dsc;
  std::vector<RoundRecord> records;
  std::map<std::string, ModelParams> final_params;  // per regime
  std::string report_csv;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

// Deterministic summary table; contains no timing data.
std::string render_report(const ExperimentConfig& config, const std::vector<RoundRecord>& records);

double mean_over(const std::map<ClassId, double>& values, const ClassSet& classes);

}  // namespace ctune
