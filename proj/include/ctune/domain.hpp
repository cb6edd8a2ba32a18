#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ctune/grid.hpp"

namespace ctune {

using ClassId = int;
using ClassSet = std::set<ClassId>;

struct ClassInfo {
  ClassId id = 0;
  std::string name;
};

// Ordered class roster plus the old/new split used by experiment configs.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  ClassCatalog(std::vector<ClassInfo> classes, ClassSet old_classes = {}, ClassSet new_classes = {});

  // Nine abdominal organs; the first five are the previously learned classes.
  static ClassCatalog abdominal();

  const std::vector<ClassInfo>& classes() const { return classes_; }
  const ClassSet& old_classes() const { return old_; }
  const ClassSet& new_classes() const { return new_; }
  std::size_t size() const { return classes_.size(); }

  bool contains(ClassId id) const { return id >= 0 && static_cast<std::size_t>(id) < classes_.size(); }
  const std::string& name(ClassId id) const;
  ClassId id_of(std::string_view name) const;
  ClassSet all_ids() const;

 private:
  std::vector<ClassInfo> classes_;
  ClassSet old_;
  ClassSet new_;
};

enum class Provenance : std::uint8_t { ground_truth, ai_predicted, expert_revised };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct MaskChannel {
  ClassId class_id = 0;
  Mask mask;
  Provenance provenance = Provenance::ground_truth;

  bool operator==(const MaskChannel&) const = default;
};

// Per-class binary channels. `m` is stored rather than derived so that
// persisted sets can be checked against a recount.
struct AnnotationSet {
  std::map<ClassId, MaskChannel> channels;
  std::size_t m = 0;

  std::size_t n() const { return channels.size(); }
  std::size_t count_expert() const;
  void put(MaskChannel channel);
  bool contains(ClassId id) const { return channels.count(id) != 0; }
  ClassSet class_ids() const;

  bool operator==(const AnnotationSet&) const = default;
};

inline constexpr std::string_view kTagPredicted = "predicted";
inline constexpr std::string_view kTagRevised = "revised";
inline constexpr std::string_view kTagHybrid = "hybrid";

struct Scan {
  std::string scan_id;
  Image image;
  AnnotationSet ground_truth;
  std::map<std::string, AnnotationSet> annotations;
  std::uint64_t seed = 0;

  GridDims dims() const { return image.dims(); }
  bool operator==(const Scan&) const = default;
};

// Dice similarity of two binary masks. Empty vs empty scores 1.
double dsc(const Mask& a, const Mask& b);

struct Violation {
  std::string kind;
  std::string detail;
};

// Returns every violated invariant; an empty list means the set is well formed.
std::vector<Violation> validate_annotation_set(const AnnotationSet& set, const ClassCatalog& catalog, GridDims dims);

bool is_binary(const Mask& mask);

}  // namespace ctune
