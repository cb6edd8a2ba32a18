#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ctune/domain.hpp"

namespace ctune {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

// Axis-aligned ellipse template. Centres and radii are fractions of the grid
// height (y) and width (x) so one layout serves every grid size.
struct BlobTemplate {
  Range center_y;
  Range center_x;
  Range radius_y;
  Range radius_x;
  double intensity = 0.5;
};

struct PhantomSpec {
  GridDims grid{64, 64};
  std::vector<BlobTemplate> blobs;  // indexed by class id
  double noise_sigma = 0.02;
  bool allow_touching = true;
  // Class pairs whose blobs may abut or overlap when allow_touching is set.
  std::vector<std::pair<ClassId, ClassId>> touching_pairs;

  // Layout matching ClassCatalog::abdominal().
  static PhantomSpec abdominal(GridDims grid = {64, 64});
};

// Throws GenerationError when the layout cannot be realised on the grid.
void validate_phantom_spec(const PhantomSpec& spec, const ClassCatalog& catalog);

Scan generate_phantom(std::uint64_t seed, const PhantomSpec& spec, const ClassCatalog& catalog);

struct ManifestEntry {
  std::string scan_id;
  std::uint64_t seed = 0;
  std::string content_digest;
};

struct DatasetManifest {
  std::string format_version = "1.0";
  GridDims dims;
  ClassCatalog catalog;
  std::vector<ManifestEntry> entries;

  std::string digest() const;
};

struct GeneratedDataset {
  std::vector<Scan> scans;
  DatasetManifest manifest;
};

std::string scan_name(std::size_t index);

GeneratedDataset generate_dataset(std::uint64_t seed, std::size_t n_scans, const PhantomSpec& spec,
                                  const ClassCatalog& catalog);

// Digest over image pixels and every annotation channel.
std::string scan_digest(const Scan& scan);
DatasetManifest make_manifest(const std::vector<Scan>& scans, const ClassCatalog& catalog);

// Simulated expert: replaces the requested channels with ground truth.
AnnotationSet oracle_revise(const Scan& scan, const AnnotationSet& predicted, const ClassSet& classes_to_revise);

}  // namespace ctune
