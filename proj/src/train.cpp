#include "ctune/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "ctune/hybrid.hpp"
#include "ctune/loss.hpp"
#include "ctune/rng.hpp"

namespace ctune {

std::string_view to_string(DataStrategy s) {
  switch (s) {
    case DataStrategy::revised_only:
      return "revised_only";
    case DataStrategy::hybrid:
      return "hybrid";
    case DataStrategy::full:
      return "full";
  }
  return "unknown";
}

DataStrategy data_strategy_from_string(std::string_view s) {
  if (s == "revised_only") return DataStrategy::revised_only;
  if (s == "hybrid") return DataStrategy::hybrid;
  if (s == "full") return DataStrategy::full;
  throw DomainError("unknown data strategy " + std::string(s));
}

TuningConfig TuningConfig::desk() {
  TuningConfig c;
  c.epochs = 40;
  c.warmup_epochs = 4;
  c.batch_size = 8;
  c.base_lr = 3e-3;
  return c;
}

void TuningConfig::validate() const {
  if (!(reuse_fraction >= 0.0 && reuse_fraction <= 1.0)) throw ContractError("reuse_fraction must lie in [0,1]");
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (!(base_lr > 0.0)) throw ContractError("base_lr must be > 0");
  if (weight_decay < 0.0) throw ContractError("weight_decay must be >= 0");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (warmup_epochs < 0) throw ContractError("warmup_epochs must be >= 0");
  if (!(loss_mix >= 0.0 && loss_mix <= 1.0)) throw ContractError("loss_mix must lie in [0,1]");
}

SampleGradient sample_gradient(const ModelParams& params, const TrainingSample& sample, double loss_mix,
                               bool shared_gradients) {
  SampleGradient out;
  if (sample.target.channels.empty()) return out;
  const ForwardState st = forward(params, sample.image, sample.target.class_ids());
  std::map<ClassId, const Eigen::RowVectorXd*> logits;
  for (const auto& [k, head] : st.heads) logits.emplace(k, &head.logits);
  LogitLoss loss = masked_loss_from_logits(logits, sample.target, loss_mix);
  out.loss = loss.value;
  backward(params, st, loss.grad, shared_gradients, out.grads);
  return out;
}

TrainResult train(ModelParams params, const DatasetView& view, const TuningConfig& config, const Partition& partition,
                  const TrainOptions& options) {
  config.validate();
  if (view.empty()) throw ContractError("train: empty dataset view");
  bool shared_trainable = false;
  for (const auto& name : partition.trainable) {
    if (!params.contains(name)) throw ContractError("train: partition names unknown parameter " + name);
    if (partition_label(name) == "shared") shared_trainable = true;
  }
  if (config.freeze_shared && shared_trainable) {
    throw ContractError("train: freeze_shared is set but the partition trains shared parameters");
  }

  const auto n = view.size();
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto steps_per_epoch = static_cast<std::int64_t>((n + batch - 1) / batch);
  const std::int64_t total_steps = steps_per_epoch * config.epochs;
  const std::int64_t warmup_steps = std::min<std::int64_t>(steps_per_epoch * config.warmup_epochs, total_steps);

  TrainResult result;
  std::vector<std::size_t> order(n);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(config.seed, 0x5eed0000u + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      const double inv = 1.0 / static_cast<double>(stop - start);
      NamedTensors grads;
      double batch_loss = 0.0;
      for (std::size_t b = start; b < stop; ++b) {
        const TrainingSample& sample = view[order[b]];
        if (partition.trainable.empty()) {
          batch_loss += sample_gradient(params, sample, config.loss_mix, false).loss;
          continue;
        }
        SampleGradient sg = sample_gradient(params, sample, config.loss_mix, shared_trainable);
        batch_loss += sg.loss;
        for (auto& [name, g] : sg.grads) {
          if (!partition.trainable.count(name)) continue;
          auto it = grads.find(name);
          if (it == grads.end()) {
            grads.emplace(name, std::move(g));
          } else {
            for (std::size_t i = 0; i < g.size(); ++i) it->second.values[i] += g.values[i];
          }
        }
      }
      batch_loss *= inv;
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                            " (lr " + std::to_string(lr) + ")");
      }
      loss_sum += batch_loss * static_cast<double>(stop - start);
      lr = lr_schedule(step + 1, total_steps + 1, warmup_steps, config.base_lr);
      ++step;
      if (partition.trainable.empty()) continue;
      for (const auto& name : partition.trainable) {
        auto it = grads.find(name);
        if (it == grads.end()) {
          grads.emplace(name, Tensor::zeros(params.tensor(name).shape));
        } else {
          for (double& v : it->second.values) v *= inv;
        }
      }
      update_parameters(params, grads, result.optimizer, lr, config.weight_decay, partition.trainable);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.mean_loss = loss_sum / static_cast<double>(n);
    rec.lr = lr;
    rec.wall_time_seconds = std::max(wall, 1e-9);
    rec.scans_processed = n;
    if (options.validation && !options.validation->empty()) {
      rec.validation_dsc = evaluate(params, *options.validation, options.validation_classes);
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.history.epochs.push_back(std::move(rec));
  }
  result.params = std::move(params);
  return result;
}

std::map<ClassId, double> evaluate(const ModelParams& params, const std::vector<Scan>& test_scans,
                                   const ClassSet& classes, double threshold) {
  std::map<ClassId, double> sums;
  for (ClassId k : classes) sums[k] = 0.0;
  if (test_scans.empty()) return sums;
  for (const auto& scan : test_scans) {
    const auto probs = predict(params, scan.image, classes);
    const AnnotationSet pred = binarize_predictions(probs, threshold);
    for (ClassId k : classes) {
      auto gt = scan.ground_truth.channels.find(k);
      if (gt == scan.ground_truth.channels.end()) {
        throw ContractError("evaluate: " + scan.scan_id + " has no ground truth for class " + std::to_string(k));
      }
      sums[k] += dsc(pred.channels.at(k).mask, gt->second.mask);
    }
  }
  for (auto& [k, v] : sums) v /= static_cast<double>(test_scans.size());
  return sums;
}

}  // namespace ctune
