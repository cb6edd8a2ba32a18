#include "ctune/loss.hpp"

#include <cmath>

#include "ctune/model.hpp"

namespace ctune {

namespace {

void check_mix(double mix) {
  if (!(mix >= 0.0 && mix <= 1.0)) throw ContractError("loss mix must lie in [0,1]");
}

struct DiceTerms {
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_g = 0.0;

  double loss() const { return 1.0 - (2.0 * inter + kDiceSmooth) / (sum_p + sum_g + kDiceSmooth); }
  double grad(double g) const {
    const double den = sum_p + sum_g + kDiceSmooth;
    return -(2.0 * g * den - (2.0 * inter + kDiceSmooth)) / (den * den);
  }
};

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

}  // namespace

ProbabilityLoss masked_loss(const std::map<ClassId, ProbabilityGrid>& probs, const AnnotationSet& target, double mix) {
  check_mix(mix);
  ProbabilityLoss out;
  for (const auto& [k, p] : probs) out.grad.emplace(k, ProbabilityGrid(p.dims(), 0.0));
  if (target.channels.empty()) return out;
  const double scale = 1.0 / static_cast<double>(target.n());
  for (const auto& [k, ch] : target.channels) {
    auto it = probs.find(k);
    if (it == probs.end()) throw ContractError("masked_loss: no prediction for annotated class " + std::to_string(k));
    const ProbabilityGrid& p = it->second;
    require_same_dims(p.dims(), ch.mask.dims(), "masked_loss");
    const auto n = static_cast<double>(p.size());
    DiceTerms d;
    double bce = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = ch.mask[i];
      d.inter += p[i] * g;
      d.sum_p += p[i];
      d.sum_g += g;
      bce -= g * std::log(p[i]) + (1.0 - g) * std::log(1.0 - p[i]);
    }
    out.value += scale * (mix * d.loss() + (1.0 - mix) * bce / n);
    ProbabilityGrid& gr = out.grad.at(k);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = ch.mask[i];
      const double dbce = (-g / p[i] + (1.0 - g) / (1.0 - p[i])) / n;
      gr[i] = scale * (mix * d.grad(g) + (1.0 - mix) * dbce);
    }
  }
  return out;
}

LogitLoss masked_loss_from_logits(const std::map<ClassId, const Eigen::RowVectorXd*>& logits,
                                  const AnnotationSet& target, double mix) {
  check_mix(mix);
  LogitLoss out;
  if (target.channels.empty()) return out;
  const double scale = 1.0 / static_cast<double>(target.n());
  for (const auto& [k, ch] : target.channels) {
    auto it = logits.find(k);
    if (it == logits.end()) throw ContractError("masked_loss: no prediction for annotated class " + std::to_string(k));
    const Eigen::RowVectorXd& z = *it->second;
    if (static_cast<std::size_t>(z.size()) != ch.mask.size()) throw ShapeError("masked_loss: logit/mask size mismatch");
    const auto n = static_cast<double>(z.size());
    Eigen::RowVectorXd p(z.size());
    DiceTerms d;
    double bce = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double g = ch.mask[static_cast<std::size_t>(i)];
      p(i) = sigmoid(z(i));
      d.inter += p(i) * g;
      d.sum_p += p(i);
      d.sum_g += g;
      bce += softplus(z(i)) - g * z(i);
    }
    out.value += scale * (mix * d.loss() + (1.0 - mix) * bce / n);
    Eigen::RowVectorXd gz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      const double g = ch.mask[static_cast<std::size_t>(i)];
      const double ddice = d.grad(g) * p(i) * (1.0 - p(i));
      gz(i) = scale * (mix * ddice + (1.0 - mix) * (p(i) - g) / n);
    }
    out.grad.emplace(k, std::move(gz));
  }
  return out;
}

}  // namespace ctune
