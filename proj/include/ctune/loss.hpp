#pragma once

#include <Eigen/Core>
#include <map>

#include "ctune/domain.hpp"

namespace ctune {

// Additive smoothing in the soft Dice ratio; keeps empty channels well defined.
inline constexpr double kDiceSmooth = 1.0;

struct ProbabilityLoss {
  double value = 0.0;
  std::map<ClassId, ProbabilityGrid> grad;  // d(loss)/d(probability), one grid per input channel
};

// Mean over the channels present in `target` of
//   mix * soft_dice_loss + (1 - mix) * binary_cross_entropy.
// Channels missing from `target` contribute nothing and receive zero gradient.
ProbabilityLoss masked_loss(const std::map<ClassId, ProbabilityGrid>& probs, const AnnotationSet& target, double mix);

struct LogitLoss {
  double value = 0.0;
  std::map<ClassId, Eigen::RowVectorXd> grad;  // annotated channels only
};

// Same loss evaluated from logits (numerically stable cross-entropy); used by training.
LogitLoss masked_loss_from_logits(const std::map<ClassId, const Eigen::RowVectorXd*>& logits,
                                  const AnnotationSet& target, double mix);

}  // namespace ctune
