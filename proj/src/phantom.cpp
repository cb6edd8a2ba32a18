#include "ctune/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numbers>

#include "ctune/digest.hpp"
#include "ctune/rng.hpp"

namespace ctune {

namespace {

constexpr int kMaxAttempts = 100;
constexpr double kMinForeground = 0.01;
constexpr double kMaxForeground = 0.40;

struct Ellipse {
  double cy, cx, ry, rx;  // pixel units
};

Mask rasterize(const Ellipse& e, GridDims dims) {
  Mask mask(dims, 0);
  for (int y = 0; y < dims.height; ++y) {
    const double dy = (y + 0.5 - e.cy) / e.ry;
    for (int x = 0; x < dims.width; ++x) {
      const double dx = (x + 0.5 - e.cx) / e.rx;
      mask(y, x) = (dy * dy + dx * dx <= 1.0) ? 1 : 0;
    }
  }
  return mask;
}

bool overlaps(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] & b[i]) return true;
  }
  return false;
}

}  // namespace

PhantomSpec PhantomSpec::abdominal(GridDims grid) {
  PhantomSpec spec;
  spec.grid = grid;
  // clang-format off
  spec.blobs = {
      {{0.25, 0.31}, {0.23, 0.29}, {0.14, 0.18},  {0.13, 0.16},  0.55},  // liver
      {{0.25, 0.31}, {0.79, 0.83}, {0.10, 0.12},  {0.08, 0.10},  0.65},  // spleen
      {{0.73, 0.79}, {0.77, 0.83}, {0.09, 0.11},  {0.065, 0.08}, 0.85},  // kidney_left
      {{0.73, 0.79}, {0.17, 0.23}, {0.09, 0.11},  {0.065, 0.08}, 0.75},  // kidney_right
      {{0.50, 0.54}, {0.63, 0.67}, {0.05, 0.06},  {0.12, 0.15},  0.95},  // pancreas
      {{0.16, 0.20}, {0.55, 0.59}, {0.08, 0.10},  {0.07, 0.09},  0.35},  // stomach
      {{0.74, 0.78}, {0.42, 0.44}, {0.065, 0.08}, {0.065, 0.075}, 0.25}, // postcava
      {{0.74, 0.78}, {0.56, 0.58}, {0.065, 0.08}, {0.065, 0.075}, 0.45}, // aorta
      {{0.48, 0.52}, {0.34, 0.38}, {0.065, 0.08}, {0.065, 0.08},  0.15},  // gall_bladder
  };
  // clang-format on
  spec.touching_pairs = {{0, 8}, {6, 7}};
  return spec;
}

void validate_phantom_spec(const PhantomSpec& spec, const ClassCatalog& catalog) {
  if (spec.grid.height <= 0 || spec.grid.width <= 0) throw GenerationError("grid size must be positive");
  if (spec.blobs.size() != catalog.size()) {
    throw GenerationError("phantom layout has " + std::to_string(spec.blobs.size()) + " templates for " +
                          std::to_string(catalog.size()) + " classes");
  }
  if (!(spec.noise_sigma >= 0.0)) throw GenerationError("noise_sigma must be >= 0");
  for (std::size_t k = 0; k < spec.blobs.size(); ++k) {
    const auto& b = spec.blobs[k];
    const std::string who = "class " + catalog.name(static_cast<ClassId>(k));
    for (const Range* r : {&b.center_y, &b.center_x, &b.radius_y, &b.radius_x}) {
      if (r->lo > r->hi || r->lo < 0.0) throw GenerationError(who + ": invalid range");
    }
    if (b.radius_y.lo <= 0.0 || b.radius_x.lo <= 0.0) throw GenerationError(who + ": radius must be positive");
    if (b.center_y.lo - b.radius_y.hi < 0.0 || b.center_y.hi + b.radius_y.hi > 1.0 ||
        b.center_x.lo - b.radius_x.hi < 0.0 || b.center_x.hi + b.radius_x.hi > 1.0) {
      throw GenerationError(who + ": shape does not fit inside the grid");
    }
    if (b.intensity < 0.0 || b.intensity > 1.0) throw GenerationError(who + ": intensity outside [0,1]");
    // Continuous area bounds; rasterised areas are re-checked per sample.
    const double min_area = std::numbers::pi * b.radius_y.lo * b.radius_x.lo;
    const double max_area = std::numbers::pi * b.radius_y.hi * b.radius_x.hi;
    if (min_area < kMinForeground || b.radius_y.lo * spec.grid.height < 0.5 || b.radius_x.lo * spec.grid.width < 0.5) {
      throw GenerationError(who + ": shape too small for grid");
    }
    if (max_area > kMaxForeground) throw GenerationError(who + ": shape too large");
  }
  for (auto [a, b] : spec.touching_pairs) {
    if (!catalog.contains(a) || !catalog.contains(b)) throw GenerationError("touching pair references unknown class");
  }
}

Scan generate_phantom(std::uint64_t seed, const PhantomSpec& spec, const ClassCatalog& catalog) {
  validate_phantom_spec(spec, catalog);
  const GridDims dims = spec.grid;
  const std::size_t n_classes = catalog.size();

  auto exempt = [&](std::size_t a, std::size_t b) {
    if (!spec.allow_touching) return false;
    for (auto [p, q] : spec.touching_pairs) {
      if ((static_cast<std::size_t>(p) == a && static_cast<std::size_t>(q) == b) ||
          (static_cast<std::size_t>(p) == b && static_cast<std::size_t>(q) == a)) {
        return true;
      }
    }
    return false;
  };

  Rng shape_rng(derive_seed(seed, 1));
  std::vector<Mask> masks;
  bool placed = false;
  for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
    masks.clear();
    for (std::size_t k = 0; k < n_classes; ++k) {
      const auto& b = spec.blobs[k];
      Ellipse e{shape_rng.uniform(b.center_y.lo, b.center_y.hi) * dims.height,
                shape_rng.uniform(b.center_x.lo, b.center_x.hi) * dims.width,
                shape_rng.uniform(b.radius_y.lo, b.radius_y.hi) * dims.height,
                shape_rng.uniform(b.radius_x.lo, b.radius_x.hi) * dims.width};
      masks.push_back(rasterize(e, dims));
    }
    placed = true;
    for (std::size_t a = 0; a < n_classes && placed; ++a) {
      const auto fg = std::count(masks[a].values().begin(), masks[a].values().end(), std::uint8_t{1});
      const double frac = static_cast<double>(fg) / static_cast<double>(dims.size());
      if (frac < kMinForeground || frac > kMaxForeground) placed = false;
      for (std::size_t b = a + 1; b < n_classes && placed; ++b) {
        if (!exempt(a, b) && overlaps(masks[a], masks[b])) placed = false;
      }
    }
  }
  if (!placed) throw GenerationError("could not place all shapes after " + std::to_string(kMaxAttempts) + " attempts");

  Scan scan;
  scan.seed = seed;
  scan.image = Image(dims, 0.0f);
  Rng noise_rng(derive_seed(seed, 2));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      if (masks[k][i]) v += spec.blobs[k].intensity;
    }
    if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise_rng.normal();
    scan.image[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
  for (std::size_t k = 0; k < n_classes; ++k) {
    scan.ground_truth.put({static_cast<ClassId>(k), std::move(masks[k]), Provenance::ground_truth});
  }
  return scan;
}

std::string scan_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scan_%04zu", index);
  return buf;
}

std::string scan_digest(const Scan& scan) {
  Fnv1a h;
  h.update(scan.scan_id);
  h.update_pod(scan.image.height());
  h.update_pod(scan.image.width());
  h.update_bytes(scan.image.values().data(), scan.image.size() * sizeof(float));
  auto add_set = [&](std::string_view tag, const AnnotationSet& set) {
    h.update(tag);
    h.update_pod(set.m);
    for (const auto& [id, ch] : set.channels) {
      h.update_pod(id);
      h.update(to_string(ch.provenance));
      h.update_bytes(ch.mask.values().data(), ch.mask.size());
    }
  };
  add_set("ground_truth", scan.ground_truth);
  for (const auto& [tag, set] : scan.annotations) add_set(tag, set);
  return h.hex();
}

DatasetManifest make_manifest(const std::vector<Scan>& scans, const ClassCatalog& catalog) {
  DatasetManifest manifest;
  manifest.catalog = catalog;
  if (!scans.empty()) manifest.dims = scans.front().dims();
  for (const auto& s : scans) manifest.entries.push_back({s.scan_id, s.seed, scan_digest(s)});
  return manifest;
}

std::string DatasetManifest::digest() const {
  Fnv1a h;
  h.update(format_version);
  h.update_pod(dims.height);
  h.update_pod(dims.width);
  for (const auto& c : catalog.classes()) {
    h.update_pod(c.id);
    h.update(c.name);
  }
  for (const auto& e : entries) {
    h.update(e.scan_id);
    h.update_pod(e.seed);
    h.update(e.content_digest);
  }
  return h.hex();
}

GeneratedDataset generate_dataset(std::uint64_t seed, std::size_t n_scans, const PhantomSpec& spec,
                                  const ClassCatalog& catalog) {
  if (n_scans < 1) throw ContractError("generate_dataset: n_scans must be >= 1");
  GeneratedDataset out;
  out.scans.reserve(n_scans);
  for (std::size_t i = 0; i < n_scans; ++i) {
    Scan s = generate_phantom(seed + i, spec, catalog);
    s.scan_id = scan_name(i);
    out.scans.push_back(std::move(s));
  }
  out.manifest = make_manifest(out.scans, catalog);
  return out;
}

AnnotationSet oracle_revise(const Scan& scan, const AnnotationSet& predicted, const ClassSet& classes_to_revise) {
  for (ClassId k : classes_to_revise) {
    if (!scan.ground_truth.contains(k)) {
      throw DomainError("oracle_revise: class " + std::to_string(k) + " is not in the catalog of " + scan.scan_id);
    }
  }
  AnnotationSet out = predicted;
  for (ClassId k : classes_to_revise) {
    out.put({k, scan.ground_truth.channels.at(k).mask, Provenance::expert_revised});
  }
  out.m = out.count_expert();
  return out;
}

}  // namespace ctune
