#include "ctune/optim.hpp"

#include <cmath>
#include <numbers>

namespace ctune {

double lr_schedule(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double base_lr) {
  if (step <= 0) return warmup_steps > 0 ? 0.0 : base_lr;
  if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return base_lr;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

UpdateReport update_parameters(ModelParams& params, const NamedTensors& gradients, OptimizerState& state, double lr,
                               double weight_decay, const std::set<std::string>& trainable, const AdamWHyper& hyper) {
  UpdateReport report;
  for (const auto& [name, _] : gradients) {
    if (!trainable.count(name)) report.ignored.push_back(name);
  }
  for (const auto& name : trainable) {
    auto git = gradients.find(name);
    if (git == gradients.end()) throw ContractError("update_parameters: no gradient for trainable " + name);
    Tensor& p = params.tensor(name);
    const Tensor& g = git->second;
    if (g.size() != p.size()) throw ShapeError("update_parameters: gradient shape mismatch for " + name);
    MomentState& s = state[name];
    if (s.m.empty()) {
      s.m.assign(p.size(), 0.0);
      s.v.assign(p.size(), 0.0);
    }
    s.step += 1;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.values[i];
      s.m[i] = hyper.beta1 * s.m[i] + (1.0 - hyper.beta1) * gi;
      s.v[i] = hyper.beta2 * s.v[i] + (1.0 - hyper.beta2) * gi * gi;
      double w = p.values[i] * (1.0 - lr * weight_decay);
      w -= lr * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + hyper.eps);
      p.values[i] = w;
    }
  }
  return report;
}

}  // namespace ctune
