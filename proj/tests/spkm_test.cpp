#include <algorithm>
#include <cmath>

#include "doctest.h"

#include <Eigen/Dense>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "spkm/spkm.hpp"

using namespace dnr;

namespace {

Eigen::MatrixXd two_bundles(int per_side, int d, double spread,
                            std::uint64_t seed, Eigen::VectorXd* a_out,
                            Eigen::VectorXd* b_out) {
  Rng rng = Rng::derive(seed, 0);
  Eigen::VectorXd a = rng.unit_vector(d);
  Eigen::VectorXd b = -a;
  Eigen::MatrixXd x(2 * per_side, d);
  for (int i = 0; i < per_side; ++i) {
    x.row(i) = (a + spread * rng.normal_vector(d)).normalized().transpose();
    x.row(per_side + i) =
        (b + spread * rng.normal_vector(d)).normalized().transpose();
  }
  if (a_out) *a_out = a;
  if (b_out) *b_out = b;
  return x;
}

}  // namespace

TEST_CASE("fit recovers two antipodal bundles") {
  Eigen::VectorXd a, b;
  Eigen::MatrixXd x = two_bundles(40, 6, 0.01, 3, &a, &b);
  ClusterModel m = fit_spkm(x, 2, 17);

  // Match centroids to bundles by similarity.
  int cluster_of_a = m.centroids.row(0).dot(a) > m.centroids.row(1).dot(a)
                         ? 0
                         : 1;
  Eigen::VectorXd mean_a = Eigen::VectorXd::Zero(6);
  for (int i = 0; i < 40; ++i) mean_a += x.row(i).transpose();
  mean_a.normalize();
  Eigen::VectorXd mean_b = Eigen::VectorXd::Zero(6);
  for (int i = 40; i < 80; ++i) mean_b += x.row(i).transpose();
  mean_b.normalize();

  CHECK(1.0 - m.centroids.row(cluster_of_a).dot(mean_a) < 1e-6);
  CHECK(1.0 - m.centroids.row(1 - cluster_of_a).dot(mean_b) < 1e-6);
  for (int i = 0; i < 40; ++i) CHECK(m.assignments[i] == cluster_of_a);
  for (int i = 40; i < 80; ++i) CHECK(m.assignments[i] == 1 - cluster_of_a);
}

TEST_CASE("K = N gives singleton clusters with zero inertia") {
  Rng rng = Rng::derive(5, 0);
  Eigen::MatrixXd x(5, 4);
  for (int i = 0; i < 5; ++i) x.row(i) = rng.unit_vector(4).transpose();
  ClusterModel m = fit_spkm(x, 5, 1);
  CHECK(m.inertia == doctest::Approx(0.0).epsilon(1e-12));
  std::vector<int> sorted = m.assignments;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4});
}

TEST_CASE("fit is deterministic per seed") {
  Eigen::MatrixXd x = two_bundles(20, 5, 0.2, 9, nullptr, nullptr);
  ClusterModel m1 = fit_spkm(x, 3, 42);
  ClusterModel m2 = fit_spkm(x, 3, 42);
  CHECK(m1.centroids == m2.centroids);
  CHECK(m1.assignments == m2.assignments);
  CHECK(m1.inertia == m2.inertia);
}

TEST_CASE("inertia is non-increasing over iterations") {
  Eigen::MatrixXd x = two_bundles(50, 8, 0.6, 13, nullptr, nullptr);
  ClusterModel m = fit_spkm(x, 4, 7);
  REQUIRE(m.inertia_trace.size() >= 2);
  for (std::size_t i = 1; i < m.inertia_trace.size(); ++i)
    CHECK(m.inertia_trace[i] <= m.inertia_trace[i - 1] + 1e-12);
  CHECK(m.iterations_run == static_cast<int>(m.inertia_trace.size()));

  // No empty cluster after fit.
  for (int c = 0; c < m.k; ++c)
    CHECK(std::count(m.assignments.begin(), m.assignments.end(), c) > 0);
}

TEST_CASE("fit precondition errors") {
  Eigen::MatrixXd x(2, 3);
  x << 1, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS(fit_spkm(x, 3, 1), InvalidInput);

  Eigen::MatrixXd same(4, 3);
  for (int i = 0; i < 4; ++i) same.row(i) << 1, 0, 0;
  CHECK_THROWS_AS(fit_spkm(same, 2, 1), DegenerateData);

  Eigen::MatrixXd bad(3, 3);
  bad << 2, 0, 0, 0, 1, 0, 0, 0, 1;
  CHECK_THROWS_AS(fit_spkm(bad, 2, 1), InvalidInput);
}

TEST_CASE("assign matches centroids, tie-break, and scaling invariance") {
  ClusterModel m;
  m.k = 4;
  m.centroids.resize(4, 2);
  double s = std::sqrt(0.5);
  m.centroids << 1, 0, 0, 1, -1, 0, s, s;

  Eigen::VectorXd z(2);
  z << s, s;
  CHECK(assign_cluster(m, m.centroids.row(3).transpose()) == 3);

  ClusterModel two;
  two.k = 2;
  two.centroids.resize(2, 2);
  two.centroids << 1, 0, 0, 1;
  CHECK(assign_cluster(two, z) == 0);  // equidistant, smallest k

  bool warned = false;
  Eigen::VectorXd scaled = 7.5 * z;
  CHECK(assign_cluster(two, scaled, &warned) == 0);
  CHECK(warned);
  warned = true;
  CHECK(assign_cluster(two, z, &warned) == 0);
  CHECK_FALSE(warned);

  CHECK_THROWS_AS(assign_cluster(two, Eigen::VectorXd::Zero(2)), InvalidInput);
  CHECK_THROWS_AS(assign_cluster(two, Eigen::VectorXd::Ones(3)), InvalidInput);
}

TEST_CASE("assign matches exhaustive argmax on random data") {
  Rng rng = Rng::derive(77, 0);
  ClusterModel m;
  m.k = 6;
  m.centroids.resize(6, 5);
  for (int c = 0; c < 6; ++c)
    m.centroids.row(c) = rng.unit_vector(5).transpose();
  for (int t = 0; t < 50; ++t) {
    Eigen::VectorXd z = rng.unit_vector(5);
    int best = 0;
    for (int c = 1; c < 6; ++c)
      if (m.centroids.row(c).dot(z) > m.centroids.row(best).dot(z)) best = c;
    CHECK(assign_cluster(m, z) == best);
  }
}

TEST_CASE("permuted rows get permuted assignments under fixed seeding") {
  Eigen::MatrixXd x = two_bundles(15, 4, 0.3, 21, nullptr, nullptr);
  Eigen::MatrixXd init(3, 4);
  init.row(0) = x.row(0);
  init.row(1) = x.row(17);
  init.row(2) = x.row(29);

  ClusterModel base = fit_spkm_from(x, init);

  std::vector<int> perm(x.rows());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = Rng::derive(2, 0);
  rng.shuffle(perm);
  Eigen::MatrixXd shuffled(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    shuffled.row(i) = x.row(perm[i]);

  ClusterModel moved = fit_spkm_from(shuffled, init);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    CHECK(moved.assignments[i] == base.assignments[perm[i]]);
}
