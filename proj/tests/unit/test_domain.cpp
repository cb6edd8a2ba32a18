#include <doctest.h>

#include <algorithm>

#include "ctune/domain.hpp"
#include "helpers.hpp"

using namespace ctune;

namespace {

// Reference Dice over explicit pixel index sets.
double dsc_by_sets(const Mask& a, const Mask& b) {
  std::vector<std::size_t> sa, sb, both;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]) sa.push_back(i);
    if (b[i]) sb.push_back(i);
  }
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(both));
  if (sa.empty() && sb.empty()) return 1.0;
  return 2.0 * static_cast<double>(both.size()) / static_cast<double>(sa.size() + sb.size());
}

}  // namespace

TEST_CASE("dsc hand-counted example on 8x8") {
  Mask a({8, 8}), b({8, 8});
  a(0, 0) = a(0, 1) = a(0, 2) = 1;
  b(0, 1) = b(0, 2) = b(3, 3) = b(4, 4) = b(5, 5) = 1;
  CHECK(dsc(a, b) == 0.5);
}

TEST_CASE("dsc trivial cases and conventions") {
  Rng rng(3);
  const Mask a = test::random_mask(rng, {8, 8});
  CHECK(dsc(a, a) == 1.0);
  const Mask empty({8, 8});
  CHECK(dsc(empty, empty) == 1.0);
  Mask left({8, 8}), right({8, 8});
  left(1, 1) = 1;
  right(2, 2) = 1;
  CHECK(dsc(left, right) == 0.0);
  CHECK_THROWS_AS(dsc(Mask({8, 8}), Mask({4, 4})), ShapeError);
  Mask bad({2, 2});
  bad[0] = 2;
  CHECK_THROWS_AS(dsc(bad, bad), DomainError);
}

TEST_CASE("dsc is symmetric and matches the set oracle") {
  Rng rng(11);
  for (int t = 0; t < 500; ++t) {
    const Mask a = test::random_mask(rng, {8, 8}, rng.uniform());
    const Mask b = test::random_mask(rng, {8, 8}, rng.uniform());
    CHECK(dsc(a, b) == dsc(b, a));
    CHECK(dsc(a, b) == dsc_by_sets(a, b));
  }
}

TEST_CASE("catalog validation") {
  const auto cat = ClassCatalog::abdominal();
  CHECK(cat.size() == 9);
  CHECK(cat.old_classes() == ClassSet{0, 1, 2, 3, 4});
  CHECK(cat.new_classes() == ClassSet{5, 6, 7, 8});
  CHECK(cat.id_of("aorta") == 7);
  CHECK(cat.name(8) == "gall_bladder");
  CHECK_THROWS_AS(cat.id_of("heart"), DomainError);
  CHECK_THROWS_AS(ClassCatalog({{0, "a"}, {2, "b"}}), DomainError);
  CHECK_THROWS_AS(ClassCatalog({{0, "a"}, {1, "a"}}), DomainError);
  CHECK_THROWS_AS(ClassCatalog({{0, "a"}, {1, "b"}}, {0}, {0}), DomainError);
}

TEST_CASE("validate_annotation_set reports violations") {
  const auto cat = ClassCatalog::abdominal();
  const GridDims dims{4, 4};
  AnnotationSet ok;
  ok.put({0, Mask(dims), Provenance::ai_predicted});
  ok.put({5, Mask(dims), Provenance::expert_revised});
  CHECK(validate_annotation_set(ok, cat, dims).empty());

  AnnotationSet unknown = ok;
  unknown.channels.emplace(42, MaskChannel{42, Mask(dims), Provenance::ai_predicted});
  auto v = validate_annotation_set(unknown, cat, dims);
  REQUIRE(v.size() == 1);
  CHECK(v[0].kind == "unknown class");

  AnnotationSet wrong_m;
  wrong_m.put({0, Mask(dims), Provenance::expert_revised});
  wrong_m.put({1, Mask(dims), Provenance::expert_revised});
  wrong_m.put({2, Mask(dims), Provenance::ai_predicted});
  wrong_m.m = 3;
  v = validate_annotation_set(wrong_m, cat, dims);
  REQUIRE(!v.empty());
  CHECK(v[0].kind == "m inconsistent");

  AnnotationSet shape;
  shape.put({0, Mask({2, 2}), Provenance::ai_predicted});
  CHECK(validate_annotation_set(shape, cat, dims).at(0).kind == "shape mismatch");

  AnnotationSet nonbinary;
  Mask m(dims);
  m[3] = 7;
  nonbinary.put({0, m, Provenance::ai_predicted});
  CHECK(validate_annotation_set(nonbinary, cat, dims).at(0).kind == "non-binary mask");
}

TEST_CASE("m never exceeds n after put") {
  Rng rng(5);
  AnnotationSet s;
  for (int i = 0; i < 50; ++i) {
    const auto k = static_cast<ClassId>(rng.below(9));
    const auto p = rng.uniform() < 0.5 ? Provenance::expert_revised : Provenance::ai_predicted;
    s.put({k, Mask({2, 2}), p});
    CHECK(s.m <= s.n());
    CHECK(s.m == s.count_expert());
  }
}

TEST_CASE("provenance strings round trip") {
  for (auto p : {Provenance::ground_truth, Provenance::ai_predicted, Provenance::expert_revised}) {
    CHECK(provenance_from_string(to_string(p)) == p);
  }
  CHECK_THROWS_AS(provenance_from_string("guess"), DomainError);
}
