#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dnr {

struct SurvivalRecord {
  std::string patient_id;
  double time = 0.0;  // days since resection, > 0
  int event = 0;      // 1 = death, 0 = censored
};

struct LoglikResult {
  double loglik = 0.0;
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
};

struct CoxFit {
  std::vector<std::string> covariate_names;
  Eigen::VectorXd beta;
  double log_likelihood = 0.0;
  Eigen::MatrixXd observed_information;  // -Hessian at the optimum
  bool converged = false;
  bool singular = false;  // information not positive definite
  bool ridged = false;    // ridge stabilization used during Newton
  int newton_iterations = 0;
};

struct SelectionStep {
  std::string candidate;
  int column = -1;
  double lr_statistic = 0.0;
  double p_value = 1.0;
  bool accepted = false;
  std::vector<std::string> skipped;  // candidates whose fits failed this step
};

struct SelectionTrace {
  std::vector<SelectionStep> steps;
  std::vector<int> selected;  // column indices in acceptance order
  std::vector<std::string> selected_names;
  std::vector<int> excluded_zero_columns;
  int n_feat = 0;
};

struct ForwardSelection {
  SelectionTrace trace;
  CoxFit fit;  // final model; null model when nothing is accepted
};

struct LoocvResult {
  std::vector<double> eta;         // NaN where the refit failed
  std::vector<std::uint8_t> valid;
  int failed = 0;
};

struct CIndexResult {
  bool defined = false;  // false when there are no comparable pairs
  double value = 0.0;
  long comparable = 0;
  long concordant = 0;
  long tied = 0;
};

struct BrierResult {
  double score = 0.0;
  double t_eval = 0.0;
  int excluded_zero_weight = 0;  // censoring-KM weight undefined
};

struct KmPoint {
  double time = 0.0;
  double survival = 1.0;
  int at_risk = 0;
  int events = 0;
};

struct KmCurve {
  std::vector<KmPoint> points;          // one per distinct event time
  std::vector<double> censoring_times;  // tick marks
};

struct LogRankResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
};

struct CategoricalCovariate {
  std::string name;
  std::vector<std::string> values;  // aligned with records, "" = missing
};

struct HazardRow {
  std::string covariate;
  std::string level;  // coded-1 level; reference or "one-vs-all" in note
  double hazard_ratio = 1.0;
  double ci_low = 1.0;
  double ci_high = 1.0;
  double p_value = 1.0;
  int n_used = 0;
  bool skipped = false;
  std::string note;
};

// Efron tied-time log partial likelihood with analytic gradient and Hessian.
// Recentred by the max linear predictor; a saturated denominator yields
// loglik = -inf rather than an error. p = 0 gives the null-model likelihood.
LoglikResult efron_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                          const std::vector<SurvivalRecord>& records);

// Breslow tie handling, value only. Cross-check oracle: equals efron_loglik
// on tie-free data.
double breslow_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const std::vector<SurvivalRecord>& records);

// Newton-Raphson from start with step halving. Converged when max |gradient|
// < 1e-8 or the relative loglik change < 1e-10. Monotone likelihood
// (|beta| escaping past 40) and iteration exhaustion throw NonConverged.
CoxFit fit_cox_from(const Eigen::VectorXd& start, const Eigen::MatrixXd& x,
                    const std::vector<SurvivalRecord>& records,
                    const std::vector<std::string>& names = {},
                    double ridge_epsilon = 1e-8);
CoxFit fit_cox(const Eigen::MatrixXd& x,
               const std::vector<SurvivalRecord>& records,
               const std::vector<std::string>& names = {},
               double ridge_epsilon = 1e-8);

// Greedy forward selection: each step adds the remaining candidate with the
// smallest LR-test p-value (chi-square, df 1) if p < alpha, ties to the
// lowest column index. All-zero columns are excluded up front.
ForwardSelection forward_select(const Eigen::MatrixXd& x,
                                const std::vector<SurvivalRecord>& records,
                                const std::vector<std::string>& names = {},
                                double alpha = 0.05);

// Leave-one-out linear predictors eta_i = x_i . beta^{-i}, warm-started from
// the full-data fit. Failed refits are flagged, not fatal.
LoocvResult loocv_linear_predictors(const Eigen::MatrixXd& x,
                                    const std::vector<SurvivalRecord>& records,
                                    double ridge_epsilon = 1e-8);

// Harrell's C over pairs (i,j) with t_i < t_j and e_i = 1; eta ties count 0.5.
CIndexResult c_index(const std::vector<double>& eta,
                     const std::vector<SurvivalRecord>& records,
                     const std::vector<std::uint8_t>& valid = {});

// IPCW Brier score at t_eval from per-patient survival probabilities
// s_hat_i = S_i(t_eval). Weights use the censoring Kaplan-Meier G with risk
// sets {t_j >= u}: events before t_eval weigh 1/G(t_i-), survivors 1/G(t_eval),
// earlier censorings weigh 0 but stay in the denominator. Patients whose
// weight divides by G = 0 are excluded and counted.
BrierResult brier_from_survival(const std::vector<double>& s_hat,
                                const std::vector<SurvivalRecord>& records,
                                double t_eval);

// Same, with s_hat_i = exp(-Lambda0(t_eval) * exp(eta_i)) from the Breslow
// baseline cumulative hazard of (records, eta). t_eval <= 0 means the median
// observed time.
BrierResult brier_score(const std::vector<double>& eta,
                        const std::vector<SurvivalRecord>& records,
                        double t_eval = 0.0);

double median_observed_time(const std::vector<SurvivalRecord>& records);

// Product-limit estimator; at tied times events are processed before
// censorings (censoring at t stays in the risk set of t).
KmCurve kaplan_meier(const std::vector<SurvivalRecord>& records);

// Standard log-rank test across groups, df = #groups - 1. group[i] labels
// records[i] with an integer in [0, #groups).
LogRankResult log_rank(const std::vector<SurvivalRecord>& records,
                       const std::vector<int>& group);

// HR = exp(beta) with the 1.96-se Wald interval and two-sided p.
HazardRow wald_row(double beta, double se);

// Univariate Cox per covariate: binary levels give one row (second sorted
// level coded 1), multi-level covariates one one-vs-all row per level.
// HR = exp(beta), CI = exp(beta +- 1.96 se), Wald p. Missing values ("")
// drop the record for that covariate only.
std::vector<HazardRow> univariate_hr_table(
    const std::vector<CategoricalCovariate>& covariates,
    const std::vector<SurvivalRecord>& records);

}  // namespace dnr
