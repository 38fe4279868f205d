#include "synth/synth.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "descriptor/descriptor.hpp"
#include "spkm/spkm.hpp"
#include "survival/survival.hpp"

using dnr::SynthConfig;
using dnr::SynthCohort;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.n_patients = 6;
  c.grid_rows = 16;
  c.grid_cols = 16;
  c.k_true = 4;
  c.feature_dim = 16;
  c.sigma = 0.05;
  c.censor_target = 0.2;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("noiseless features are recovered exactly by spherical k-means") {
  SynthConfig c = small_config();
  c.sigma = 0.0;
  const SynthCohort cohort = dnr::generate(c);

  std::vector<int> seen(c.k_true, 0);
  for (const auto& p : cohort.patches) ++seen[p.cluster];
  for (int g = 0; g < c.k_true; ++g) REQUIRE(seen[g] > 0);

  Eigen::MatrixXd e(cohort.patches.size(), c.feature_dim);
  for (std::size_t i = 0; i < cohort.patches.size(); ++i)
    e.row(static_cast<Eigen::Index>(i)) = cohort.patches[i].feature;

  const dnr::ClusterModel model = dnr::fit_spkm(e, c.k_true, 77);
  CHECK(model.inertia == doctest::Approx(0.0).epsilon(1e-12));

  // Centroid -> prototype must be a bijection, and every assignment must
  // map to the ground-truth label under it.
  std::vector<int> perm(c.k_true, -1);
  std::vector<int> used(c.k_true, 0);
  for (int g = 0; g < c.k_true; ++g) {
    int best = -1;
    double best_dot = -2.0;
    for (int q = 0; q < c.k_true; ++q) {
      const double dot = model.centroids.row(g).dot(cohort.prototypes.row(q));
      if (dot > best_dot) {
        best_dot = dot;
        best = q;
      }
    }
    REQUIRE(best_dot > 1.0 - 1e-10);
    perm[g] = best;
    ++used[best];
  }
  for (int q = 0; q < c.k_true; ++q) CHECK(used[q] == 1);
  for (std::size_t i = 0; i < cohort.patches.size(); ++i)
    CHECK(perm[model.assignments[i]] == cohort.patches[i].cluster);
}

TEST_CASE("null beta gives chance-level concordance for any predictor") {
  SynthConfig c;
  c.n_patients = 500;
  c.grid_rows = 4;
  c.grid_cols = 4;
  c.k_true = 4;
  c.feature_dim = 8;
  c.censor_target = 0.2;
  c.seed = 23;
  const SynthCohort cohort = dnr::generate(c);
  REQUIRE(cohort.beta_true.isZero(0.0));

  dnr::Rng rng = dnr::Rng::derive(901, 0);
  std::vector<double> random_eta(cohort.records.size());
  for (auto& v : random_eta) v = rng.normal();
  const dnr::CIndexResult a = dnr::c_index(random_eta, cohort.records);
  REQUIRE(a.defined);
  CHECK(std::abs(a.value - 0.5) <= 0.05);

  std::vector<double> freq_eta(cohort.records.size());
  for (std::size_t i = 0; i < cohort.descriptors.size(); ++i)
    freq_eta[i] = cohort.descriptors[i].h_c[0];
  const dnr::CIndexResult b = dnr::c_index(freq_eta, cohort.records);
  REQUIRE(b.defined);
  CHECK(std::abs(b.value - 0.5) <= 0.05);
}

TEST_CASE("achieved censoring tracks the target") {
  SynthConfig c;
  c.n_patients = 1000;
  c.grid_rows = 2;
  c.grid_cols = 2;
  c.k_true = 4;
  c.feature_dim = 4;
  c.censor_target = 0.3;
  c.seed = 5;
  // Non-trivial beta so the per-patient hazards are heterogeneous.
  c.beta_true = Eigen::VectorXd::Zero(4 + 16);
  c.beta_true.head(4) << 1.5, -1.0, 0.5, 0.0;
  const SynthCohort cohort = dnr::generate(c);
  CHECK(std::abs(cohort.censor_rate_achieved - 0.3) <= 0.05);
  CHECK(cohort.censor_rate_param > 0.0);

  SUBCASE("zero target disables censoring entirely") {
    c.censor_target = 0.0;
    const SynthCohort full = dnr::generate(c);
    CHECK(full.censor_rate_param == 0.0);
    CHECK(full.censor_rate_achieved == 0.0);
    for (const auto& r : full.records) CHECK(r.event == 1);
  }
}

TEST_CASE("equal seeds reproduce the cohort bit for bit") {
  const SynthConfig c = small_config();
  const SynthCohort a = dnr::generate(c);
  const SynthCohort b = dnr::generate(c);

  REQUIRE(a.patches.size() == b.patches.size());
  for (std::size_t i = 0; i < a.patches.size(); ++i) {
    CHECK(a.patches[i].patch_id == b.patches[i].patch_id);
    CHECK(a.patches[i].cluster == b.patches[i].cluster);
    REQUIRE(a.patches[i].feature == b.patches[i].feature);
  }
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].time == b.records[i].time);
    CHECK(a.records[i].event == b.records[i].event);
  }
  CHECK(a.prototypes == b.prototypes);
  CHECK(a.censor_rate_param == b.censor_rate_param);

  SynthConfig other = c;
  other.seed = 12;
  const SynthCohort d = dnr::generate(other);
  CHECK(a.records[0].time != d.records[0].time);
}

TEST_CASE("cohort output satisfies the descriptor and record contracts") {
  SynthConfig c = small_config();
  c.slides_per_patient = 2;
  c.beta_true = Eigen::VectorXd::Zero(4 + 16);
  c.beta_true[0] = 1.0;
  const SynthCohort cohort = dnr::generate(c);

  CHECK(cohort.descriptors.size() == static_cast<std::size_t>(c.n_patients));
  CHECK(cohort.records.size() == static_cast<std::size_t>(c.n_patients));
  CHECK(cohort.patches.size() ==
        static_cast<std::size_t>(c.n_patients) * 2 * 16 * 16);
  CHECK(cohort.config.beta_true.size() == 20);
  CHECK(cohort.baseline_rate == doctest::Approx(std::log(2.0) / 1000.0));

  for (const auto& d : cohort.descriptors) {
    CHECK(d.h_c.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(dnr::flatten(d).size() == 20);
    for (int g = 0; g < d.k; ++g) {
      const double row_sum = d.h_t.row(g).sum();
      if (d.row_observed[g])
        CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-12));
      else
        CHECK(row_sum == 0.0);
    }
  }
  for (const auto& r : cohort.records) {
    CHECK(r.time > 0.0);
    CHECK((r.event == 0 || r.event == 1));
  }
  for (const auto& p : cohort.patches) {
    CHECK(p.cluster >= 0);
    CHECK(p.cluster < c.k_true);
  }
}

TEST_CASE("smoothing raises same-label adjacency above the iid baseline") {
  SynthConfig c = small_config();
  c.n_patients = 1;
  const SynthCohort cohort = dnr::generate(c);

  // Horizontal and vertical neighbor agreement on the single 16x16 grid.
  std::vector<int> lab(16 * 16);
  for (const auto& p : cohort.patches) lab[p.row * 16 + p.col] = p.cluster;
  int same = 0;
  int total = 0;
  for (int r = 0; r < 16; ++r) {
    for (int col = 0; col < 16; ++col) {
      if (col + 1 < 16) {
        same += lab[r * 16 + col] == lab[r * 16 + col + 1];
        ++total;
      }
      if (r + 1 < 16) {
        same += lab[r * 16 + col] == lab[(r + 1) * 16 + col];
        ++total;
      }
    }
  }
  const double agreement = static_cast<double>(same) / total;
  CHECK(agreement > 0.5);  // iid baseline is 1/k = 0.25
}

TEST_CASE("generate rejects invalid configurations") {
  SynthConfig c = small_config();
  c.k_true = 1;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.censor_target = 1.0;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.sigma = -0.1;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.flip_prob = 1.5;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.beta_true = Eigen::VectorXd::Zero(7);
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.n_patients = 0;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
  c = small_config();
  c.baseline_median_days = 0.0;
  CHECK_THROWS_AS(dnr::generate(c), dnr::InvalidInput);
}

TEST_CASE("simulate_cox recovers planted coefficients") {
  Eigen::VectorXd beta(2);
  beta << 0.8, -0.5;
  const dnr::CoxSim sim = dnr::simulate_cox(2000, beta, 0.0, 31);
  REQUIRE(sim.records.size() == 2000);
  CHECK(sim.censor_rate_achieved == 0.0);

  const dnr::CoxFit fit = dnr::fit_cox(sim.x, sim.records);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.beta[0] - 0.8) < 0.1);
  CHECK(std::abs(fit.beta[1] + 0.5) < 0.1);

  SUBCASE("censoring target is met") {
    const dnr::CoxSim cs = dnr::simulate_cox(2000, beta, 0.35, 31);
    CHECK(std::abs(cs.censor_rate_achieved - 0.35) <= 0.05);
  }
  SUBCASE("reruns are bit-identical") {
    const dnr::CoxSim again = dnr::simulate_cox(2000, beta, 0.0, 31);
    CHECK(sim.x == again.x);
    for (std::size_t i = 0; i < sim.records.size(); ++i)
      CHECK(sim.records[i].time == again.records[i].time);
  }
  SUBCASE("invalid arguments throw") {
    CHECK_THROWS_AS(dnr::simulate_cox(1, beta, 0.0, 1), dnr::InvalidInput);
    CHECK_THROWS_AS(dnr::simulate_cox(10, beta, 1.0, 1), dnr::InvalidInput);
  }
}
