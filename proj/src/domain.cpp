#include "ctune/domain.hpp"

#include <algorithm>

namespace ctune {

ClassCatalog::ClassCatalog(std::vector<ClassInfo> classes, ClassSet old_classes, ClassSet new_classes)
    : classes_(std::move(classes)), old_(std::move(old_classes)), new_(std::move(new_classes)) {
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    if (classes_[i].id != static_cast<ClassId>(i)) {
      throw DomainError("class ids must be unique and contiguous from 0 (found " + std::to_string(classes_[i].id) +
                        " at position " + std::to_string(i) + ")");
    }
    if (!names.insert(classes_[i].name).second) throw DomainError("duplicate class name " + classes_[i].name);
  }
  for (ClassId id : old_) {
    if (!contains(id)) throw DomainError("old class " + std::to_string(id) + " not in catalog");
    if (new_.count(id)) throw DomainError("class " + std::to_string(id) + " is both old and new");
  }
  for (ClassId id : new_) {
    if (!contains(id)) throw DomainError("new class " + std::to_string(id) + " not in catalog");
  }
  if (!old_.empty() && !new_.empty() && old_.size() + new_.size() != classes_.size()) {
    throw DomainError("old and new classes must cover the catalog");
  }
}

ClassCatalog ClassCatalog::abdominal() {
  std::vector<ClassInfo> classes{{0, "liver"},    {1, "spleen"},   {2, "kidney_left"},
                                 {3, "kidney_right"}, {4, "pancreas"}, {5, "stomach"},
                                 {6, "postcava"}, {7, "aorta"},    {8, "gall_bladder"}};
  return ClassCatalog(std::move(classes), {0, 1, 2, 3, 4}, {5, 6, 7, 8});
}

const std::string& ClassCatalog::name(ClassId id) const {
  if (!contains(id)) throw DomainError("unknown class id " + std::to_string(id));
  return classes_[static_cast<std::size_t>(id)].name;
}

ClassId ClassCatalog::id_of(std::string_view name) const {
  for (const auto& c : classes_) {
    if (c.name == name) return c.id;
  }
  throw DomainError("unknown class " + std::string(name));
}

ClassSet ClassCatalog::all_ids() const {
  ClassSet out;
  for (const auto& c : classes_) out.insert(c.id);
  return out;
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::ground_truth:
      return "ground_truth";
    case Provenance::ai_predicted:
      return "ai_predicted";
    case Provenance::expert_revised:
      return "expert_revised";
  }
  return "unknown";
}

Provenance provenance_from_string(std::string_view s) {
  if (s == "ground_truth") return Provenance::ground_truth;
  if (s == "ai_predicted") return Provenance::ai_predicted;
  if (s == "expert_revised") return Provenance::expert_revised;
  throw DomainError("unknown provenance " + std::string(s));
}

std::size_t AnnotationSet::count_expert() const {
  return static_cast<std::size_t>(std::count_if(channels.begin(), channels.end(), [](const auto& kv) {
    return kv.second.provenance == Provenance::expert_revised;
  }));
}

void AnnotationSet::put(MaskChannel channel) {
  const ClassId id = channel.class_id;
  channels.insert_or_assign(id, std::move(channel));
  m = count_expert();
}

ClassSet AnnotationSet::class_ids() const {
  ClassSet out;
  for (const auto& [id, _] : channels) out.insert(id);
  return out;
}

bool is_binary(const Mask& mask) {
  return std::all_of(mask.values().begin(), mask.values().end(), [](std::uint8_t v) { return v <= 1; });
}

double dsc(const Mask& a, const Mask& b) {
  require_same_dims(a.dims(), b.dims(), "dsc");
  std::size_t inter = 0;
  std::size_t sa = 0;
  std::size_t sb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const std::uint8_t va = a[i];
    const std::uint8_t vb = b[i];
    if (va > 1 || vb > 1) throw DomainError("dsc: mask values must be 0 or 1");
    sa += va;
    sb += vb;
    inter += static_cast<std::size_t>(va & vb);
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

std::vector<Violation> validate_annotation_set(const AnnotationSet& set, const ClassCatalog& catalog, GridDims dims) {
  std::vector<Violation> out;
  for (const auto& [key, ch] : set.channels) {
    const std::string tag = "class " + std::to_string(key);
    if (key != ch.class_id) {
      out.push_back({"key mismatch", tag + " stored under a different class id " + std::to_string(ch.class_id)});
    }
    if (!catalog.contains(ch.class_id)) out.push_back({"unknown class", tag + " is not in the catalog"});
    if (ch.mask.dims() != dims) {
      out.push_back({"shape mismatch", tag + " has " + to_string(ch.mask.dims()) + ", expected " + to_string(dims)});
    }
    if (!is_binary(ch.mask)) out.push_back({"non-binary mask", tag + " contains values other than 0/1"});
  }
  const std::size_t recount = set.count_expert();
  if (set.m != recount) {
    out.push_back({"m inconsistent",
                   "declared m=" + std::to_string(set.m) + " but " + std::to_string(recount) + " expert channels"});
  }
  if (set.m > set.n()) {
    out.push_back({"m exceeds n", "m=" + std::to_string(set.m) + " > n=" + std::to_string(set.n())});
  }
  return out;
}

}  // namespace ctune
