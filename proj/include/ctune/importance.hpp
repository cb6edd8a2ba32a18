#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ctune/domain.hpp"
#include "ctune/model.hpp"

namespace ctune {

struct ImportanceWeights {
  double uncertainty = 1.0 / 3.0;
  double consistency = 1.0 / 3.0;
  double overlap = 1.0 / 3.0;

  void validate() const;
};

struct ScanScore {
  std::string scan_id;
  double u = 0.0;
  double c = 1.0;
  double o = 0.0;
  double importance = 0.0;

  bool operator==(const ScanScore&) const = default;
};

// Mean normalised binary entropy over all classes and pixels.
double uncertainty_score(const std::map<ClassId, ProbabilityGrid>& probs);

// An exactly invertible grid symmetry used for test-time augmentation.
struct GridTransform {
  std::string name;
  std::function<Image(const Image&)> apply;
  std::function<ProbabilityGrid(const ProbabilityGrid&)> invert;

  static GridTransform identity();
  static GridTransform flip_horizontal();
  static GridTransform flip_vertical();
  static GridTransform rotate_180();
};

std::vector<GridTransform> default_augmentations();

// Mean pairwise DSC between binarised predictions made under each transform
// (mapped back to the original frame), averaged over classes.
double consistency_score(const ModelParams& params, const Image& image, const ClassSet& classes,
                         const std::vector<GridTransform>& augmentations);

// Pixels foreground in at least two channels over pixels foreground in at least one.
double overlap_score(const AnnotationSet& masks);

double importance(double u, double c, double o, const ImportanceWeights& weights);

// Highest importance first; ties by ascending scan_id.
std::vector<std::string> select_for_revision(const std::vector<ScanScore>& scores, std::size_t k);

// Top ceil(r * |previous|) scans by the same ordering.
std::vector<std::string> select_reuse(const std::vector<ScanScore>& previous, double fraction);

}  // namespace ctune
