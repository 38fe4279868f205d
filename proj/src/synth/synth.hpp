#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "descriptor/descriptor.hpp"
#include "survival/survival.hpp"

namespace dnr {

// Seeded cohort generator: spatial label fields, prototype features, and
// survival times from a known proportional-hazards model.
struct SynthConfig {
  int n_patients = 40;
  int slides_per_patient = 1;
  int grid_rows = 16;
  int grid_cols = 16;
  int k_true = 4;            // >= 2
  double flip_prob = 0.15;   // per-visit randomization during relaxation
  int smoothing_sweeps = 3;  // majority-vote passes over each grid
  int feature_dim = 16;
  double sigma = 0.05;        // feature noise, >= 0
  Eigen::VectorXd beta_true;  // length k_true + k_true^2; empty = all zero
  double censor_target = 0.2;          // in [0, 1)
  double baseline_median_days = 1000.0;  // exponential baseline scale
  std::uint64_t seed = 0;
};

struct SynthPatch {
  std::string patch_id;
  std::string patient_id;
  std::string slide_id;
  int slide = 0;  // slide index within the patient
  int row = 0;
  int col = 0;
  int cluster = 0;  // ground truth
  Eigen::VectorXd feature;
};

struct SynthCohort {
  SynthConfig config;          // echo, beta_true resolved to full length
  Eigen::MatrixXd prototypes;  // k_true x feature_dim, unit rows
  std::vector<SynthPatch> patches;
  std::vector<PatientDescriptor> descriptors;  // from ground-truth labels
  std::vector<SurvivalRecord> records;
  Eigen::VectorXd beta_true;
  double baseline_rate = 0.0;          // lambda0 = ln 2 / median
  double censor_rate_param = 0.0;      // censoring hazard, 0 = no censoring
  double censor_rate_achieved = 0.0;   // realized fraction with event = 0
};

// Deterministic in config.seed; per-patient streams derive from
// (seed, patient index) so patient order never changes the draws.
SynthCohort generate(const SynthConfig& config);

// Flat Cox oracle: X ~ N(0,1) i.i.d., exponential baseline with unit rate,
// censoring tuned to the target rate as in generate().
struct CoxSim {
  Eigen::MatrixXd x;  // n x p
  std::vector<SurvivalRecord> records;
  double censor_rate_achieved = 0.0;
};

CoxSim simulate_cox(int n, const Eigen::VectorXd& beta, double censor_target,
                    std::uint64_t seed);

}  // namespace dnr
