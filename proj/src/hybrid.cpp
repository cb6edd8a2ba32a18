#include "ctune/hybrid.hpp"

namespace ctune {

AnnotationSet merge_hybrid(const AnnotationSet& predicted, const AnnotationSet& revised) {
  for (const auto& [k, ch] : revised.channels) {
    if (ch.provenance != Provenance::expert_revised) {
      throw ContractError("merge_hybrid: revised channel for class " + std::to_string(k) + " has provenance " +
                          std::string(to_string(ch.provenance)));
    }
  }
  AnnotationSet out;
  for (const auto& [k, ch] : predicted.channels) {
    if (!revised.contains(k)) out.channels.emplace(k, ch);
  }
  for (const auto& [k, ch] : revised.channels) out.channels.emplace(k, ch);
  out.m = out.count_expert();
  return out;
}

AnnotationSet binarize_predictions(const std::map<ClassId, ProbabilityGrid>& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("binarize_predictions: threshold must lie in (0,1)");
  AnnotationSet out;
  for (const auto& [k, p] : probs) {
    Mask mask(p.dims(), 0);
    for (std::size_t i = 0; i < p.size(); ++i) mask[i] = p[i] >= threshold ? 1 : 0;
    out.channels.emplace(k, MaskChannel{k, std::move(mask), Provenance::ai_predicted});
  }
  out.m = 0;
  return out;
}

const AnnotationSet& best_annotation(const Scan& scan) {
  for (std::string_view tag : {kTagHybrid, kTagRevised, kTagPredicted}) {
    auto it = scan.annotations.find(std::string(tag));
    if (it != scan.annotations.end()) return it->second;
  }
  throw ContractError("scan " + scan.scan_id + " has no annotations");
}

namespace {
const AnnotationSet& require_tag(const Scan& scan, std::string_view tag) {
  auto it = scan.annotations.find(std::string(tag));
  if (it == scan.annotations.end()) {
    throw ContractError("scan " + scan.scan_id + " has no '" + std::string(tag) + "' annotations");
  }
  return it->second;
}

AnnotationSet expert_channels(const AnnotationSet& set) {
  AnnotationSet out;
  for (const auto& [k, ch] : set.channels) {
    if (ch.provenance == Provenance::expert_revised) out.channels.emplace(k, ch);
  }
  out.m = out.n();
  return out;
}
}  // namespace

DatasetView build_training_view(const std::vector<Scan>& revised_scans, const std::vector<Scan>& reuse_scans,
                                DataStrategy strategy) {
  DatasetView view;
  switch (strategy) {
    case DataStrategy::revised_only:
      for (const auto& s : revised_scans) {
        const auto it = s.annotations.find(std::string(kTagRevised));
        AnnotationSet target =
            it != s.annotations.end() ? expert_channels(it->second) : expert_channels(require_tag(s, kTagHybrid));
        view.push_back({s.scan_id, s.image, std::move(target)});
      }
      break;
    case DataStrategy::hybrid:
      for (const auto& s : revised_scans) view.push_back({s.scan_id, s.image, require_tag(s, kTagHybrid)});
      for (const auto& s : reuse_scans) view.push_back({s.scan_id, s.image, require_tag(s, kTagPredicted)});
      break;
    case DataStrategy::full:
      for (const auto& s : revised_scans) view.push_back({s.scan_id, s.image, best_annotation(s)});
      for (const auto& s : reuse_scans) view.push_back({s.scan_id, s.image, best_annotation(s)});
      break;
  }
  if (view.empty()) throw ContractError("build_training_view: empty view");
  return view;
}

}  // namespace ctune
