#pragma once

#include <filesystem>
#include <string>

#include "ctune/domain.hpp"
#include "ctune/model.hpp"
#include "ctune/rng.hpp"

namespace ctune::test {

inline Mask random_mask(Rng& rng, GridDims dims, double density = 0.4) {
  Mask m(dims);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < density ? 1 : 0;
  return m;
}

inline Image random_image(Rng& rng, GridDims dims) {
  Image img(dims);
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rng.uniform());
  return img;
}

inline ProbabilityGrid random_probs(Rng& rng, GridDims dims) {
  ProbabilityGrid p(dims);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 0.02 + 0.96 * rng.uniform();
  return p;
}

// Two-stage network small enough for finite differences on a 16x16 input.
inline ArchConfig toy_arch() {
  ArchConfig a;
  a.encoder_channels = {3, 4};
  a.bottleneck_channels = 5;
  a.feature_channels = 3;
  a.embedding_dim = 4;
  return a;
}

inline ClassCatalog three_classes() {
  return ClassCatalog({{0, "liver"}, {1, "spleen"}, {2, "aorta"}}, {0, 1}, {2});
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ctune_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ctune::test

#include "ctune/loop.hpp"

namespace ctune::test {

// Seconds-scale experiment: 32x32 grids, a handful of scans, two rounds.
inline ExperimentConfig tiny_experiment() {
  ExperimentConfig c = ExperimentConfig::desk_reference();
  c.phantom = PhantomSpec::abdominal({32, 32});
  c.arch.encoder_channels = {4, 8};
  c.arch.bottleneck_channels = 8;
  c.arch.feature_channels = 6;
  c.arch.embedding_dim = 6;
  c.base_train_size = 12;
  c.test_size = 6;
  c.validation_size = 3;
  c.base_training.epochs = 3;
  c.base_training.warmup_epochs = 1;
  c.base_training.batch_size = 4;
  const ClassSet revise = c.catalog.new_classes();
  c.rounds = {RoundSpec{PoolSource::base, 12, 3, revise}, RoundSpec{PoolSource::fresh, 10, 4, revise}};
  for (auto& r : c.regimes) {
    r.tuning.epochs = 2;
    r.tuning.warmup_epochs = 1;
    r.tuning.batch_size = 2;
  }
  return c;
}

}  // namespace ctune::test
