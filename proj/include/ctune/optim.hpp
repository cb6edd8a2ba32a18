#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ctune/model.hpp"

namespace ctune {

// Linear warm-up from 0 to base_lr over warmup_steps, then cosine decay to 0
// at total_steps.
double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct MomentState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  bool operator==(const MomentState&) const = default;
};

using OptimizerState = std::map<std::string, MomentState>;

struct UpdateReport {
  std::vector<std::string> ignored;  // gradients supplied for non-trainable names
};

// Decoupled weight decay Adam step applied to `trainable` names only. Frozen
// parameters and their optimizer state are left untouched.
UpdateReport update_parameters(ModelParams& params, const NamedTensors& gradients, OptimizerState& state, double lr,
                               double weight_decay, const std::set<std::string>& trainable,
                               const AdamWHyper& hyper = {});

}  // namespace ctune
