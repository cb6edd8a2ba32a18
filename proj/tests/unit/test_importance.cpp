#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ctune/hybrid.hpp"
#include "ctune/importance.hpp"
#include "ctune/phantom.hpp"
#include "helpers.hpp"

using namespace ctune;

TEST_CASE("uncertainty examples") {
  CHECK(uncertainty_score({{0, ProbabilityGrid({8, 8}, 0.5)}, {1, ProbabilityGrid({8, 8}, 0.5)}}) == 1.0);
  const double expected = -(0.999 * std::log(0.999) + 0.001 * std::log(0.001)) / std::log(2.0);
  CHECK(uncertainty_score({{0, ProbabilityGrid({8, 8}, 0.999)}}) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.0114).epsilon(0.01));

  ProbabilityGrid mixed({8, 8});
  const double sat = sigmoid(30.0);
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = i % 2 ? 0.5 : sat;
  const double h_sat = -(sat * std::log(sat) + (1 - sat) * std::log(1 - sat)) / std::log(2.0);
  CHECK(uncertainty_score({{0, mixed}}) == doctest::Approx(0.5 * (1.0 + h_sat)).epsilon(1e-12));
  CHECK(uncertainty_score({{0, mixed}}) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("uncertainty peaks only at 0.5") {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const double v = rng.uniform(0.001, 0.999);
    const double u = uncertainty_score({{0, ProbabilityGrid({2, 2}, v)}});
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
    if (v != 0.5) CHECK(u < 1.0);
  }
  CHECK(uncertainty_score({{0, ProbabilityGrid({2, 2}, 1.0)}, {1, ProbabilityGrid({2, 2}, 0.0)}}) == 0.0);
  CHECK_THROWS_AS(uncertainty_score({{0, ProbabilityGrid({2, 2}, 1.5)}}), DomainError);
}

TEST_CASE("overlap examples and oracle") {
  AnnotationSet disjoint;
  Mask a({8, 8}), b({8, 8});
  a(0, 0) = a(0, 1) = a(0, 2) = 1;
  b(0, 1) = b(0, 2) = b(4, 4) = b(5, 5) = b(6, 6) = 1;
  AnnotationSet ab;
  ab.put({0, a, Provenance::ai_predicted});
  ab.put({1, b, Provenance::ai_predicted});
  CHECK(overlap_score(ab) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  AnnotationSet same;
  same.put({0, a, Provenance::ai_predicted});
  same.put({1, a, Provenance::ai_predicted});
  CHECK(overlap_score(same) == 1.0);

  Mask c({8, 8});
  c(7, 7) = 1;
  disjoint.put({0, a, Provenance::ai_predicted});
  disjoint.put({1, c, Provenance::ai_predicted});
  CHECK(overlap_score(disjoint) == 0.0);

  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    AnnotationSet s;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (ClassId k = 0; k < n; ++k) s.put({k, test::random_mask(rng, {5, 5}, rng.uniform() * 0.5), Provenance::ai_predicted});
    std::size_t any = 0, multi = 0;
    for (std::size_t i = 0; i < 25; ++i) {
      int cnt = 0;
      for (const auto& [k, ch] : s.channels) cnt += ch.mask[i];
      any += cnt >= 1;
      multi += cnt >= 2;
    }
    const double expected = any ? static_cast<double>(multi) / static_cast<double>(any) : 0.0;
    CHECK(overlap_score(s) == expected);
  }
}

TEST_CASE("importance examples") {
  const ImportanceWeights w;
  CHECK(importance(0, 1, 0, w) == 0.0);
  CHECK(importance(1, 0, 1, w) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(importance(0.6, 0.8, 0.3, w) == doctest::Approx(1.1 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(importance(1.2, 0, 0, w), DomainError);
  ImportanceWeights bad{0.5, 0.5, 0.5};
  CHECK_THROWS_AS(bad.validate(), ContractError);
}

namespace {
std::vector<ScanScore> random_scores(Rng& rng, std::size_t n) {
  std::vector<ScanScore> out;
  for (std::size_t i = 0; i < n; ++i) {
    ScanScore s;
    s.scan_id = scan_name(rng.below(1000));
    // Coarse values force ties.
    s.importance = static_cast<double>(rng.below(5)) / 4.0;
    out.push_back(s);
  }
  return out;
}
}  // namespace

TEST_CASE("selection matches a full sort, is stable and scale invariant") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    auto scores = random_scores(rng, 1 + rng.below(30));
    const std::size_t k = rng.below(scores.size() + 1);
    auto sorted = scores;
    std::stable_sort(sorted.begin(), sorted.end(), [](const ScanScore& a, const ScanScore& b) {
      return a.importance != b.importance ? a.importance > b.importance : a.scan_id < b.scan_id;
    });
    std::vector<std::string> expected;
    for (std::size_t i = 0; i < k; ++i) expected.push_back(sorted[i].scan_id);
    const auto got = select_for_revision(scores, k);
    CHECK(got == expected);

    auto shuffled = scores;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    CHECK(select_for_revision(shuffled, k) == got);
    auto scaled = scores;
    for (auto& s : scaled) s.importance *= 3.7;
    CHECK(select_for_revision(scaled, k) == got);
  }
  auto scores = random_scores(rng, 5);
  CHECK(select_for_revision(scores, 0).empty());
  CHECK(select_for_revision(scores, 5).size() == 5);
  CHECK_THROWS_AS(select_for_revision(scores, 6), ContractError);
}

TEST_CASE("reuse fraction rounding") {
  Rng rng(4);
  std::vector<ScanScore> pool;
  for (std::size_t i = 0; i < 188; ++i) pool.push_back({scan_name(i), 0, 1, 0, rng.uniform()});
  CHECK(select_reuse(pool, 0.1).size() == 19);
  CHECK(select_reuse(pool, 0.0).empty());
  CHECK(select_reuse(pool, 1.0).size() == 188);
  pool.resize(190);
  for (std::size_t i = 188; i < 190; ++i) pool[i] = {scan_name(i), 0, 1, 0, 0.5};
  CHECK(select_reuse(pool, 0.1).size() == 19);
}

TEST_CASE("consistency examples") {
  const auto cat = ClassCatalog::abdominal();
  ModelParams p = init_model(5, ArchConfig{}, cat);
  const Scan s = generate_phantom(1, PhantomSpec::abdominal({32, 32}), cat);
  CHECK(consistency_score(p, s.image, {0, 1}, {GridTransform::identity(), GridTransform::identity()}) == 1.0);

  ModelParams flat = p;
  for (ClassId k : {0, 1}) {
    for (auto local : {names::kFc2Weight, names::kFc2Bias}) {
      for (double& v : flat.tensor(class_tensor_name(k, local)).values) v = 0.0;
    }
  }
  CHECK(consistency_score(flat, s.image, {0, 1}, default_augmentations()) == 1.0);
  CHECK_THROWS_AS(consistency_score(p, s.image, {0}, {}), ContractError);

  GridTransform broken = GridTransform::flip_horizontal();
  broken.invert = [](const ProbabilityGrid& g) { return g; };
  CHECK_THROWS_AS(consistency_score(p, s.image, {0}, {GridTransform::identity(), broken}), ContractError);
}

TEST_CASE("untrained models are rarely flip consistent") {
  const auto cat = ClassCatalog::abdominal();
  const ModelParams p = init_model(6, ArchConfig{}, cat);
  const auto scans = generate_dataset(77, 50, PhantomSpec::abdominal({32, 32}), cat).scans;
  int below = 0;
  for (const auto& s : scans) {
    const double c = consistency_score(p, s.image, cat.all_ids(), default_augmentations());
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
    below += c < 1.0;
  }
  CHECK(below >= 45);
}
