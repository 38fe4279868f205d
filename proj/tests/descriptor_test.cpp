#include <vector>

#include "doctest.h"

#include "core/errors.hpp"
#include "descriptor/descriptor.hpp"

using namespace dnr;

namespace {

std::vector<GridPatch> chain(const std::vector<int>& clusters) {
  std::vector<GridPatch> patches;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    patches.push_back({0, 0, static_cast<int>(i), clusters[i]});
  return patches;
}

}  // namespace

TEST_CASE("chain 0,0,1,1 composition and transitions") {
  PatientDescriptor d = build_descriptor("p", chain({0, 0, 1, 1}), 2);
  CHECK(d.h_c(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(d.h_c(1) == doctest::Approx(0.5).epsilon(1e-12));
  // Adjacencies, both directions: (0,0)x2, (0,1), (1,0), (1,1)x2.
  CHECK(d.h_t(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d.h_t(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(d.h_t(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(d.h_t(1, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(d.row_observed == std::vector<std::uint8_t>{1, 1});
}

TEST_CASE("single patch is one-hot with all transition rows unobserved") {
  PatientDescriptor d = build_descriptor("p", chain({2}), 4);
  CHECK(d.h_c(2) == 1.0);
  CHECK(d.h_c.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.h_t.cwiseAbs().sum() == 0.0);
  CHECK(d.row_observed == std::vector<std::uint8_t>{0, 0, 0, 0});
}

TEST_CASE("uniform slide self-transitions only") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) patches.push_back({0, r, c, 1});
  PatientDescriptor d = build_descriptor("p", patches, 3);
  CHECK(d.h_c(1) == 1.0);
  CHECK(d.h_t(1, 1) == 1.0);
  CHECK(d.h_t.sum() == 1.0);
  CHECK(d.row_observed == std::vector<std::uint8_t>{0, 1, 0});
}

TEST_CASE("flattened length is K + K^2") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) patches.push_back({0, r, c, (r + c) % 8});
  CHECK(flatten(build_descriptor("p", patches, 8)).size() == 72);
  for (auto& p : patches) p.cluster = (p.row + p.col) % 16;
  CHECK(flatten(build_descriptor("p", patches, 16)).size() == 272);
}

TEST_CASE("flatten and unflatten round trip") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) patches.push_back({0, r, c, (r * 5 + c) % 4});
  PatientDescriptor d = build_descriptor("p", patches, 4, 8);
  Eigen::VectorXd flat = flatten(d);
  PatientDescriptor back = unflatten("p", flat, 4);
  CHECK((back.h_c - d.h_c).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.h_t - d.h_t).cwiseAbs().maxCoeff() == 0.0);
  CHECK(back.row_observed == d.row_observed);

  CHECK_THROWS_AS(unflatten("p", flat, 5), InvalidInput);
}

TEST_CASE("cluster relabeling permutes h_c and conjugates h_t") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) patches.push_back({0, r, c, (r + 2 * c) % 3});
  PatientDescriptor d = build_descriptor("p", patches, 3);

  // Relabel via the cycle 0 -> 1 -> 2 -> 0.
  int perm[3] = {1, 2, 0};
  std::vector<GridPatch> relabeled = patches;
  for (auto& p : relabeled) p.cluster = perm[p.cluster];
  PatientDescriptor e = build_descriptor("p", relabeled, 3);

  for (int j = 0; j < 3; ++j) {
    CHECK(e.h_c(perm[j]) == doctest::Approx(d.h_c(j)).epsilon(1e-12));
    CHECK(e.row_observed[perm[j]] == d.row_observed[j]);
    for (int k = 0; k < 3; ++k)
      CHECK(e.h_t(perm[j], perm[k]) ==
            doctest::Approx(d.h_t(j, k)).epsilon(1e-12));
  }
}

TEST_CASE("duplicating every slide leaves the descriptor unchanged") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) patches.push_back({0, r, c, (r * c) % 3});
  PatientDescriptor d = build_descriptor("p", patches, 3);

  std::vector<GridPatch> doubled = patches;
  for (auto p : patches) {
    p.slide = 1;
    doubled.push_back(p);
  }
  PatientDescriptor e = build_descriptor("p", doubled, 3);
  CHECK((e.h_c - d.h_c).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((e.h_t - d.h_t).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transition rows sum to one or zero") {
  std::vector<GridPatch> patches;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c)
      patches.push_back({0, r, c, (r * 3 + c * 7) % 4});
  PatientDescriptor d = build_descriptor("p", patches, 6, 8);
  for (int j = 0; j < 6; ++j) {
    double s = d.h_t.row(j).sum();
    if (d.row_observed[j])
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    else
      CHECK(s == 0.0);
  }
  CHECK(d.h_c.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("8-connectivity adds diagonal pairs") {
  // 2x2 checkerboard: 4-conn has 4 unordered pairs, 8-conn adds 2 diagonals.
  std::vector<GridPatch> patches = {
      {0, 0, 0, 0}, {0, 0, 1, 1}, {0, 1, 0, 1}, {0, 1, 1, 0}};
  PatientDescriptor four = build_descriptor("p", patches, 2, 4);
  PatientDescriptor eight = build_descriptor("p", patches, 2, 8);
  // 4-conn: all four adjacencies are 0-1, so rows are (0,1) and (1,0).
  CHECK(four.h_t(0, 1) == 1.0);
  CHECK(four.h_t(1, 0) == 1.0);
  // 8-conn: diagonals add 0-0 and 1-1; each row is (1/3 self, 2/3 cross)
  // from 4 cross pairs + 1 self pair per label, counted both ways.
  CHECK(eight.h_t(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(eight.h_t(0, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(eight.h_t(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("non-adjacent cells in one slide never interact") {
  std::vector<GridPatch> patches = {{0, 0, 0, 0}, {0, 0, 2, 1}, {0, 5, 5, 1}};
  PatientDescriptor d = build_descriptor("p", patches, 2, 8);
  CHECK(d.h_t.cwiseAbs().sum() == 0.0);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(build_descriptor("p", {}, 2), InvalidInput);
  CHECK_THROWS_AS(build_descriptor("p", chain({0}), 0), InvalidInput);
  CHECK_THROWS_AS(build_descriptor("p", chain({0, 3}), 2), InvalidInput);
  CHECK_THROWS_AS(build_descriptor("p", chain({0, -1}), 2), InvalidInput);
  CHECK_THROWS_AS(build_descriptor("p", chain({0, 1}), 2, 5), InvalidInput);
  std::vector<GridPatch> dup = {{0, 0, 0, 0}, {0, 0, 0, 1}};
  CHECK_THROWS_AS(build_descriptor("p", dup, 2), InvalidInput);
}

TEST_CASE("feature names match the flattened layout") {
  std::vector<std::string> names = descriptor_feature_names(2);
  REQUIRE(names.size() == 6);
  CHECK(names[0] == "hC_0");
  CHECK(names[1] == "hC_1");
  CHECK(names[2] == "hT_0_0");
  CHECK(names[3] == "hT_0_1");
  CHECK(names[4] == "hT_1_0");
  CHECK(names[5] == "hT_1_1");
}
