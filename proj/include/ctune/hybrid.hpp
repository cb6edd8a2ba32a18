#pragma once

#include <map>
#include <vector>

#include "ctune/domain.hpp"
#include "ctune/train.hpp"

namespace ctune {

// Channel k of the result is revised[k] when k was revised, predicted[k]
// otherwise. Provenance travels with each channel.
AnnotationSet merge_hybrid(const AnnotationSet& predicted, const AnnotationSet& revised);

// mask = (p >= threshold), provenance ai_predicted.
AnnotationSet binarize_predictions(const std::map<ClassId, ProbabilityGrid>& probs, double threshold = 0.5);

// Best available annotation set of a scan: hybrid, then revised, then predicted.
const AnnotationSet& best_annotation(const Scan& scan);

// revised_only: revised scans with their expert channels only.
// hybrid:       revised scans with hybrid sets plus reuse scans with their predicted sets.
// full:         every given scan with its best annotation set.
DatasetView build_training_view(const std::vector<Scan>& revised_scans, const std::vector<Scan>& reuse_scans,
                                DataStrategy strategy);

}  // namespace ctune
