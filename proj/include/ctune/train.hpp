#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ctune/domain.hpp"
#include "ctune/model.hpp"
#include "ctune/optim.hpp"

namespace ctune {

enum class DataStrategy { revised_only, hybrid, full };

std::string_view to_string(DataStrategy s);
DataStrategy data_strategy_from_string(std::string_view s);

// Optimizer, schedule and data-regime settings for one training call.
//
// The member defaults are the full-scale values (lr 1e-4, weight decay 1e-5,
// batch 24, 20 warm-up epochs); desk() returns the reduced CPU settings used
// by the packaged experiment configs.
struct TuningConfig {
  DataStrategy data_strategy = DataStrategy::hybrid;
  bool freeze_shared = true;
  bool freeze_embeddings = false;
  double reuse_fraction = 0.0;
  int epochs = 250;
  double base_lr = 1e-4;
  double weight_decay = 1e-5;
  int batch_size = 24;
  int warmup_epochs = 20;
  std::uint64_t seed = 0;
  double loss_mix = 0.5;

  static TuningConfig desk();
  void validate() const;
};

struct TrainingSample {
  std::string scan_id;
  Image image;
  AnnotationSet target;
};

using DatasetView = std::vector<TrainingSample>;

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::map<ClassId, double> validation_dsc;
  double lr = 0.0;
  double wall_time_seconds = 0.0;  // optimisation time only, validation excluded
  std::size_t scans_processed = 0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct TrainOptions {
  const std::vector<Scan>* validation = nullptr;
  ClassSet validation_classes;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  TrainHistory history;
  OptimizerState optimizer;
};

// The partition decides what moves: every name outside partition.trainable is
// returned bit-identical.
TrainResult train(ModelParams params, const DatasetView& view, const TuningConfig& config, const Partition& partition,
                  const TrainOptions& options = {});

// Per-sample loss and parameter gradients; exposed for gradient checks.
struct SampleGradient {
  double loss = 0.0;
  NamedTensors grads;
};
SampleGradient sample_gradient(const ModelParams& params, const TrainingSample& sample, double loss_mix,
                               bool shared_gradients);

// Per-class mean DSC of the binarised prediction against ground truth.
std::map<ClassId, double> evaluate(const ModelParams& params, const std::vector<Scan>& test_scans,
                                   const ClassSet& classes, double threshold = 0.5);

}  // namespace ctune
