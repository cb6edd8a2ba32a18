#include "ctune/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ctune/hybrid.hpp"

namespace ctune {

void ImportanceWeights::validate() const {
  if (uncertainty < 0.0 || consistency < 0.0 || overlap < 0.0) throw ContractError("importance weights must be >= 0");
  if (std::abs(uncertainty + consistency + overlap - 1.0) > 1e-9) {
    throw ContractError("importance weights must sum to 1");
  }
}

double uncertainty_score(const std::map<ClassId, ProbabilityGrid>& probs) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& [k, p] : probs) {
    for (double v : p.values()) {
      // sigmoid rounds to exactly 1.0 in double for logits above ~37; use the limit H(0) = H(1) = 0.
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("uncertainty_score: probabilities must lie in [0,1]");
      if (v == 0.0 || v == 1.0) continue;
      total += (-v * std::log(v) - (1.0 - v) * std::log(1.0 - v)) / std::numbers::ln2;
    }
    count += p.size();
  }
  if (count == 0) return 0.0;
  return std::clamp(total / static_cast<double>(count), 0.0, 1.0);
}

namespace {

template <class T>
Grid<T> flip_h(const Grid<T>& g) {
  Grid<T> out(g.dims());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) out(y, x) = g(y, g.width() - 1 - x);
  }
  return out;
}

template <class T>
Grid<T> flip_v(const Grid<T>& g) {
  Grid<T> out(g.dims());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) out(y, x) = g(g.height() - 1 - y, x);
  }
  return out;
}

template <class T>
Grid<T> rot180(const Grid<T>& g) {
  return flip_h(flip_v(g));
}

void require_invertible(const GridTransform& t, GridDims dims) {
  if (!t.apply || !t.invert) throw ContractError("transform " + t.name + " is not invertible");
  Image probe(dims);
  ProbabilityGrid expected(dims);
  for (std::size_t i = 0; i < probe.size(); ++i) {
    probe[i] = static_cast<float>(i);
    expected[i] = static_cast<double>(i);
  }
  const Image moved = t.apply(probe);
  if (moved.dims() != dims) throw ContractError("transform " + t.name + " changes the grid dimensions");
  ProbabilityGrid as_prob(dims);
  for (std::size_t i = 0; i < moved.size(); ++i) as_prob[i] = moved[i];
  if (t.invert(as_prob) != expected) throw ContractError("transform " + t.name + " is not invertible");
}

}  // namespace

GridTransform GridTransform::identity() {
  return {"identity", [](const Image& g) { return g; }, [](const ProbabilityGrid& g) { return g; }};
}
GridTransform GridTransform::flip_horizontal() {
  return {"flip_horizontal", [](const Image& g) { return flip_h(g); },
          [](const ProbabilityGrid& g) { return flip_h(g); }};
}
GridTransform GridTransform::flip_vertical() {
  return {"flip_vertical", [](const Image& g) { return flip_v(g); },
          [](const ProbabilityGrid& g) { return flip_v(g); }};
}
GridTransform GridTransform::rotate_180() {
  return {"rotate_180", [](const Image& g) { return rot180(g); }, [](const ProbabilityGrid& g) { return rot180(g); }};
}

std::vector<GridTransform> default_augmentations() {
  return {GridTransform::identity(), GridTransform::flip_horizontal(), GridTransform::flip_vertical(),
          GridTransform::rotate_180()};
}

double consistency_score(const ModelParams& params, const Image& image, const ClassSet& classes,
                         const std::vector<GridTransform>& augmentations) {
  if (augmentations.empty()) throw ContractError("consistency_score: no augmentations");
  for (const auto& t : augmentations) require_invertible(t, image.dims());
  if (augmentations.size() < 2 || classes.empty()) return 1.0;

  std::vector<AnnotationSet> views;
  for (const auto& t : augmentations) {
    auto probs = predict(params, t.apply(image), classes);
    for (auto& [k, p] : probs) p = t.invert(p);
    views.push_back(binarize_predictions(probs, 0.5));
  }
  double total = 0.0;
  for (ClassId k : classes) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < views.size(); ++i) {
      for (std::size_t j = i + 1; j < views.size(); ++j) {
        sum += dsc(views[i].channels.at(k).mask, views[j].channels.at(k).mask);
        ++pairs;
      }
    }
    total += sum / static_cast<double>(pairs);
  }
  return total / static_cast<double>(classes.size());
}

double overlap_score(const AnnotationSet& masks) {
  if (masks.channels.empty()) return 0.0;
  const GridDims dims = masks.channels.begin()->second.mask.dims();
  std::vector<std::uint16_t> counts(dims.size(), 0);
  for (const auto& [k, ch] : masks.channels) {
    require_same_dims(ch.mask.dims(), dims, "overlap_score");
    for (std::size_t i = 0; i < ch.mask.size(); ++i) {
      if (ch.mask[i] > 1) throw DomainError("overlap_score: masks must be binary");
      counts[i] = static_cast<std::uint16_t>(counts[i] + ch.mask[i]);
    }
  }
  std::size_t any = 0;
  std::size_t multi = 0;
  for (auto c : counts) {
    any += c >= 1;
    multi += c >= 2;
  }
  return any == 0 ? 0.0 : static_cast<double>(multi) / static_cast<double>(any);
}

double importance(double u, double c, double o, const ImportanceWeights& weights) {
  for (double v : {u, c, o}) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("importance: component scores must lie in [0,1]");
  }
  return weights.uncertainty * u + weights.consistency * (1.0 - c) + weights.overlap * o;
}

namespace {
std::vector<const ScanScore*> ranked(const std::vector<ScanScore>& scores) {
  std::vector<const ScanScore*> order;
  order.reserve(scores.size());
  for (const auto& s : scores) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const ScanScore* a, const ScanScore* b) {
    if (a->importance != b->importance) return a->importance > b->importance;
    return a->scan_id < b->scan_id;
  });
  return order;
}
}  // namespace

std::vector<std::string> select_for_revision(const std::vector<ScanScore>& scores, std::size_t k) {
  if (k > scores.size()) {
    throw ContractError("select_for_revision: k=" + std::to_string(k) + " exceeds pool of " +
                        std::to_string(scores.size()));
  }
  const auto order = ranked(scores);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(order[i]->scan_id);
  return out;
}

std::vector<std::string> select_reuse(const std::vector<ScanScore>& previous, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ContractError("select_reuse: fraction must lie in [0,1]");
  // The epsilon absorbs representation error such as 0.1 * 190 = 19.000000000000004.
  const double want = std::ceil(fraction * static_cast<double>(previous.size()) - 1e-9);
  const auto k = std::min(previous.size(), static_cast<std::size_t>(std::max(0.0, want)));
  return select_for_revision(previous, k);
}

}  // namespace ctune
