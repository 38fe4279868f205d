#include "survival/survival.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "core/errors.hpp"
#include "core/stats.hpp"

namespace dnr {

namespace {

constexpr double kGradTol = 1e-8;
constexpr double kRelLlTol = 1e-10;
constexpr int kMaxNewton = 60;
constexpr double kWaldZ = 1.96;

// A fitted linear-predictor spread past this is monotone-likelihood
// territory (hazard ratio above e^30 between cohort extremes).
constexpr double kEtaSpreadEscape = 30.0;

void validate_records(const std::vector<SurvivalRecord>& records) {
  if (records.empty()) throw InvalidInput("survival: no records");
  for (const auto& r : records) {
    if (!std::isfinite(r.time) || !(r.time > 0.0))
      throw InvalidInput("survival: time must be positive (patient '" +
                         r.patient_id + "')");
    if (r.event != 0 && r.event != 1)
      throw InvalidInput("survival: event must be 0 or 1 (patient '" +
                         r.patient_id + "')");
  }
}

void validate_design(const Eigen::MatrixXd& x,
                     const std::vector<SurvivalRecord>& records) {
  validate_records(records);
  if (x.rows() != static_cast<Eigen::Index>(records.size()))
    throw InvalidInput("survival: design matrix rows do not match records");
  if (x.size() > 0 && !x.allFinite())
    throw InvalidInput("survival: non-finite covariate value");
}

int count_events(const std::vector<SurvivalRecord>& records) {
  int events = 0;
  for (const auto& r : records) events += r.event;
  return events;
}

// Indices by descending time so risk sets grow as the scan proceeds.
std::vector<int> order_by_time_desc(
    const std::vector<SurvivalRecord>& records) {
  std::vector<int> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (records[a].time != records[b].time)
      return records[a].time > records[b].time;
    return a < b;
  });
  return idx;
}

std::vector<std::string> default_names(int p) {
  std::vector<std::string> names(p);
  for (int j = 0; j < p; ++j) names[j] = "x" + std::to_string(j);
  return names;
}

double eta_spread(const Eigen::VectorXd& eta) {
  return eta.size() == 0 ? 0.0 : eta.maxCoeff() - eta.minCoeff();
}

}  // namespace

LoglikResult efron_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                          const std::vector<SurvivalRecord>& records) {
  validate_design(x, records);
  const int p = static_cast<int>(x.cols());
  if (beta.size() != p)
    throw InvalidInput("efron_loglik: beta size does not match covariates");

  const Eigen::VectorXd eta = x * beta;
  const double c = eta.size() == 0 ? 0.0 : eta.maxCoeff();
  const Eigen::VectorXd theta = (eta.array() - c).exp();

  LoglikResult out;
  out.gradient = Eigen::VectorXd::Zero(p);
  out.hessian = Eigen::MatrixXd::Zero(p, p);

  const std::vector<int> idx = order_by_time_desc(records);
  double s_r = 0.0;
  Eigen::VectorXd v_r = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd m_r = Eigen::MatrixXd::Zero(p, p);

  bool saturated = false;
  std::size_t pos = 0;
  while (pos < idx.size() && !saturated) {
    const double u = records[idx[pos]].time;
    double s_d = 0.0, eta_d = 0.0;
    Eigen::VectorXd v_d = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd m_d = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd x_d = Eigen::VectorXd::Zero(p);
    int d = 0;
    while (pos < idx.size() && records[idx[pos]].time == u) {
      const int i = idx[pos];
      const double th = theta(i);
      const Eigen::VectorXd xi = x.row(i).transpose();
      s_r += th;
      v_r.noalias() += th * xi;
      m_r.noalias() += th * xi * xi.transpose();
      if (records[i].event == 1) {
        ++d;
        eta_d += eta(i);
        x_d += xi;
        s_d += th;
        v_d.noalias() += th * xi;
        m_d.noalias() += th * xi * xi.transpose();
      }
      ++pos;
    }
    if (d == 0) continue;
    out.loglik += eta_d;
    out.gradient += x_d;
    for (int l = 0; l < d; ++l) {
      const double f = static_cast<double>(l) / d;
      const double denom = s_r - f * s_d;
      if (!(denom > 0.0)) {
        saturated = true;
        break;
      }
      out.loglik -= c + std::log(denom);
      const Eigen::VectorXd num = v_r - f * v_d;
      out.gradient -= num / denom;
      out.hessian -=
          (m_r - f * m_d) / denom - num * num.transpose() / (denom * denom);
    }
  }
  if (saturated) {
    // Every theta in some risk set underflowed; the step that got here is
    // rejected by the caller on loglik alone.
    out.loglik = -std::numeric_limits<double>::infinity();
  }
  return out;
}

double breslow_loglik(const Eigen::VectorXd& beta, const Eigen::MatrixXd& x,
                      const std::vector<SurvivalRecord>& records) {
  validate_design(x, records);
  if (beta.size() != x.cols())
    throw InvalidInput("breslow_loglik: beta size does not match covariates");

  const Eigen::VectorXd eta = x * beta;
  const double c = eta.size() == 0 ? 0.0 : eta.maxCoeff();
  const Eigen::VectorXd theta = (eta.array() - c).exp();

  const std::vector<int> idx = order_by_time_desc(records);
  double s_r = 0.0, ll = 0.0;
  std::size_t pos = 0;
  while (pos < idx.size()) {
    const double u = records[idx[pos]].time;
    double eta_d = 0.0;
    int d = 0;
    while (pos < idx.size() && records[idx[pos]].time == u) {
      const int i = idx[pos];
      s_r += theta(i);
      if (records[i].event == 1) {
        ++d;
        eta_d += eta(i);
      }
      ++pos;
    }
    if (d > 0) ll += eta_d - d * (c + std::log(s_r));
  }
  return ll;
}

CoxFit fit_cox_from(const Eigen::VectorXd& start, const Eigen::MatrixXd& x,
                    const std::vector<SurvivalRecord>& records,
                    const std::vector<std::string>& names,
                    double ridge_epsilon) {
  validate_design(x, records);
  const int p = static_cast<int>(x.cols());
  if (p < 1) throw InvalidInput("fit_cox: needs at least one covariate");
  if (count_events(records) < 1) throw InvalidInput("fit_cox: no events");
  if (start.size() != p || !start.allFinite())
    throw InvalidInput("fit_cox: bad start point");
  if (!(ridge_epsilon > 0.0))
    throw InvalidInput("fit_cox: ridge_epsilon must be positive");
  if (!names.empty() && static_cast<int>(names.size()) != p)
    throw InvalidInput("fit_cox: names do not match covariates");

  CoxFit fit;
  fit.covariate_names = names.empty() ? default_names(p) : names;

  Eigen::VectorXd beta = start;
  LoglikResult cur = efron_loglik(beta, x, records);
  if (!std::isfinite(cur.loglik))
    throw NonConverged("fit_cox: start point saturates the partial likelihood");

  const auto escaped = [&](const Eigen::VectorXd& b) {
    return eta_spread(x * b) > kEtaSpreadEscape;
  };

  bool converged = false;
  int iter = 0;
  while (iter < kMaxNewton) {
    if (cur.gradient.cwiseAbs().maxCoeff() < kGradTol) {
      converged = true;
      break;
    }
    ++iter;

    Eigen::MatrixXd neg_h = -cur.hessian;
    Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
    double ridge = 0.0;
    while (llt.info() != Eigen::Success) {
      ridge = ridge == 0.0 ? ridge_epsilon : ridge * 10.0;
      if (!(ridge < 1e12))
        throw NonConverged("fit_cox: information matrix irreparably singular");
      fit.ridged = true;
      llt.compute(neg_h + ridge * Eigen::MatrixXd::Identity(p, p));
    }
    const Eigen::VectorXd delta = llt.solve(cur.gradient);

    double scale = 1.0;
    LoglikResult next;
    bool improved = false;
    for (int half = 0; half < 40; ++half) {
      next = efron_loglik(beta + scale * delta, x, records);
      if (std::isfinite(next.loglik) && next.loglik > cur.loglik) {
        improved = true;
        break;
      }
      scale *= 0.5;
    }
    if (!improved) {
      // No representable improvement along an ascent direction: the
      // relative loglik change is below tolerance.
      converged = true;
      break;
    }

    beta += scale * delta;
    const double gain = next.loglik - cur.loglik;
    cur = std::move(next);
    if (escaped(beta)) {
      std::ostringstream msg;
      msg << "fit_cox: linear predictor spread " << eta_spread(x * beta)
          << " escaped past " << kEtaSpreadEscape
          << "; monotone likelihood (perfect separation) suspected";
      throw NonConverged(msg.str());
    }
    if (gain < kRelLlTol * std::max(1.0, std::abs(cur.loglik))) {
      converged = true;
      break;
    }
  }

  if (!converged && cur.gradient.cwiseAbs().maxCoeff() >= kGradTol) {
    std::ostringstream msg;
    msg << "fit_cox: Newton stalled after " << iter
        << " iterations (max |gradient| = "
        << cur.gradient.cwiseAbs().maxCoeff() << ")";
    throw NonConverged(msg.str());
  }

  fit.converged = true;
  fit.beta = beta;
  fit.log_likelihood = cur.loglik;
  fit.observed_information = -cur.hessian;
  fit.newton_iterations = iter;
  Eigen::LLT<Eigen::MatrixXd> info_chk(fit.observed_information);
  fit.singular = info_chk.info() != Eigen::Success;
  return fit;
}

CoxFit fit_cox(const Eigen::MatrixXd& x,
               const std::vector<SurvivalRecord>& records,
               const std::vector<std::string>& names, double ridge_epsilon) {
  if (x.cols() < 1) throw InvalidInput("fit_cox: needs at least one covariate");
  return fit_cox_from(Eigen::VectorXd::Zero(x.cols()), x, records, names,
                      ridge_epsilon);
}

ForwardSelection forward_select(const Eigen::MatrixXd& x,
                                const std::vector<SurvivalRecord>& records,
                                const std::vector<std::string>& names,
                                double alpha) {
  validate_design(x, records);
  if (!(alpha >= 0.0 && alpha < 1.0))
    throw InvalidInput("forward_select: alpha must lie in [0, 1)");
  if (count_events(records) < 1)
    throw InvalidInput("forward_select: no events");
  const int n = static_cast<int>(records.size());
  const int p = static_cast<int>(x.cols());
  if (!names.empty() && static_cast<int>(names.size()) != p)
    throw InvalidInput("forward_select: names do not match covariates");
  const std::vector<std::string> colnames =
      names.empty() ? default_names(p) : names;

  ForwardSelection out;
  std::vector<char> available(p, 1);
  for (int j = 0; j < p; ++j) {
    if (x.rows() > 0 && (x.col(j).array() == 0.0).all()) {
      available[j] = 0;
      out.trace.excluded_zero_columns.push_back(j);
    }
  }

  double ll_prev =
      efron_loglik(Eigen::VectorXd(0), Eigen::MatrixXd(n, 0), records).loglik;

  out.fit.converged = true;
  out.fit.log_likelihood = ll_prev;
  out.fit.beta.resize(0);
  out.fit.observed_information.resize(0, 0);

  std::vector<int> selected;
  while (true) {
    SelectionStep step;
    int best = -1;
    CoxFit best_fit;
    bool any_candidate = false;
    for (int j = 0; j < p; ++j) {
      if (!available[j]) continue;
      any_candidate = true;
      Eigen::MatrixXd x_aug(n, static_cast<int>(selected.size()) + 1);
      std::vector<std::string> names_aug;
      for (std::size_t s = 0; s < selected.size(); ++s) {
        x_aug.col(static_cast<int>(s)) = x.col(selected[s]);
        names_aug.push_back(colnames[selected[s]]);
      }
      x_aug.col(static_cast<int>(selected.size())) = x.col(j);
      names_aug.push_back(colnames[j]);
      CoxFit f;
      try {
        f = fit_cox(x_aug, records, names_aug);
      } catch (const NonConverged& e) {
        step.skipped.push_back(colnames[j] + ": " + e.what());
        continue;
      }
      const double lr = std::max(0.0, 2.0 * (f.log_likelihood - ll_prev));
      const double pv = chisq_sf(lr, 1);
      if (best < 0 || pv < step.p_value) {
        best = j;
        step.column = j;
        step.candidate = colnames[j];
        step.lr_statistic = lr;
        step.p_value = pv;
        best_fit = std::move(f);
      }
    }
    if (!any_candidate) break;
    if (best < 0) {
      // Every remaining candidate failed to fit.
      out.trace.steps.push_back(std::move(step));
      break;
    }
    step.accepted = step.p_value < alpha;
    out.trace.steps.push_back(step);
    if (!step.accepted) break;
    available[best] = 0;
    selected.push_back(best);
    ll_prev = best_fit.log_likelihood;
    out.fit = std::move(best_fit);
  }

  out.trace.selected = selected;
  for (int j : selected) out.trace.selected_names.push_back(colnames[j]);
  out.trace.n_feat = static_cast<int>(selected.size());
  return out;
}

LoocvResult loocv_linear_predictors(const Eigen::MatrixXd& x,
                                    const std::vector<SurvivalRecord>& records,
                                    double ridge_epsilon) {
  validate_design(x, records);
  if (x.cols() < 1)
    throw InvalidInput("loocv: selected covariate set must be non-empty");
  const int n = static_cast<int>(records.size());
  if (n < 2) throw InvalidInput("loocv: needs at least two records");

  const CoxFit full = fit_cox(x, records, {}, ridge_epsilon);

  LoocvResult out;
  out.eta.assign(n, std::numeric_limits<double>::quiet_NaN());
  out.valid.assign(n, 0);

  Eigen::MatrixXd x_sub(n - 1, x.cols());
  std::vector<SurvivalRecord> rec_sub(records.size() - 1);
  for (int i = 0; i < n; ++i) {
    int r = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      x_sub.row(r) = x.row(j);
      rec_sub[r] = records[j];
      ++r;
    }
    try {
      const CoxFit f = fit_cox_from(full.beta, x_sub, rec_sub, {},
                                    ridge_epsilon);
      out.eta[i] = x.row(i).dot(f.beta);
      out.valid[i] = 1;
    } catch (const NonConverged&) {
      ++out.failed;
    } catch (const InvalidInput&) {
      ++out.failed;  // e.g. the only event was left out
    }
  }
  return out;
}

CIndexResult c_index(const std::vector<double>& eta,
                     const std::vector<SurvivalRecord>& records,
                     const std::vector<std::uint8_t>& valid) {
  validate_records(records);
  const std::size_t n = records.size();
  if (eta.size() != n)
    throw InvalidInput("c_index: eta size does not match records");
  if (!valid.empty() && valid.size() != n)
    throw InvalidInput("c_index: validity mask size does not match records");

  const auto usable = [&](std::size_t i) {
    return (valid.empty() || valid[i]) && std::isfinite(eta[i]);
  };

  CIndexResult out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!usable(i) || records[i].event != 1) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !usable(j)) continue;
      if (!(records[i].time < records[j].time)) continue;
      ++out.comparable;
      if (eta[i] > eta[j])
        ++out.concordant;
      else if (eta[i] == eta[j])
        ++out.tied;
    }
  }
  if (out.comparable == 0) {
    out.defined = false;
    out.value = std::numeric_limits<double>::quiet_NaN();
  } else {
    out.defined = true;
    out.value = (out.concordant + 0.5 * out.tied) / out.comparable;
  }
  return out;
}

double median_observed_time(const std::vector<SurvivalRecord>& records) {
  validate_records(records);
  std::vector<double> t(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) t[i] = records[i].time;
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

namespace {

// Censoring Kaplan-Meier G with risk sets {t_j >= u}. strict=true gives the
// left limit G(t-).
double censoring_km_at(const std::vector<SurvivalRecord>& records, double t,
                       bool strict) {
  std::set<double> censor_times;
  for (const auto& r : records)
    if (r.event == 0) censor_times.insert(r.time);
  double g = 1.0;
  for (double u : censor_times) {
    if (strict ? u >= t : u > t) break;
    int n_at = 0, d = 0;
    for (const auto& r : records) {
      if (r.time >= u) ++n_at;
      if (r.time == u && r.event == 0) ++d;
    }
    g *= 1.0 - static_cast<double>(d) / n_at;
  }
  return g;
}

}  // namespace

BrierResult brier_from_survival(const std::vector<double>& s_hat,
                                const std::vector<SurvivalRecord>& records,
                                double t_eval) {
  validate_records(records);
  const std::size_t n = records.size();
  if (s_hat.size() != n)
    throw InvalidInput("brier: predictions do not match records");
  double t_max = 0.0;
  for (const auto& r : records) t_max = std::max(t_max, r.time);
  if (!std::isfinite(t_eval) || !(t_eval > 0.0) || t_eval > t_max)
    throw InvalidInput("brier: t_eval outside the follow-up range");
  for (double s : s_hat)
    if (!std::isfinite(s) || s < 0.0 || s > 1.0)
      throw InvalidInput("brier: predicted survival outside [0, 1]");

  BrierResult out;
  out.t_eval = t_eval;
  const double g_eval = censoring_km_at(records, t_eval, false);
  double num = 0.0;
  int kept = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = records[i];
    if (r.event == 1 && r.time <= t_eval) {
      const double g = censoring_km_at(records, r.time, true);
      if (!(g > 0.0)) {
        ++out.excluded_zero_weight;
        continue;
      }
      num += s_hat[i] * s_hat[i] / g;
      ++kept;
    } else if (r.time > t_eval) {
      if (!(g_eval > 0.0)) {
        ++out.excluded_zero_weight;
        continue;
      }
      num += (1.0 - s_hat[i]) * (1.0 - s_hat[i]) / g_eval;
      ++kept;
    } else {
      ++kept;  // censored before t_eval: IPCW weight 0, stays in the mean
    }
  }
  if (kept == 0) throw DegenerateData("brier: every patient was excluded");
  out.score = num / kept;
  return out;
}

BrierResult brier_score(const std::vector<double>& eta,
                        const std::vector<SurvivalRecord>& records,
                        double t_eval) {
  validate_records(records);
  const std::size_t n = records.size();
  if (eta.size() != n)
    throw InvalidInput("brier: eta size does not match records");
  for (double e : eta)
    if (!std::isfinite(e)) throw InvalidInput("brier: non-finite eta");
  if (t_eval <= 0.0) t_eval = median_observed_time(records);

  // Breslow baseline cumulative hazard at t_eval, recentred.
  double c = eta[0];
  for (double e : eta) c = std::max(c, e);
  std::set<double> event_times;
  for (const auto& r : records)
    if (r.event == 1 && r.time <= t_eval) event_times.insert(r.time);
  double a = 0.0;  // sum over event times of d_u / (sum of recentred theta)
  for (double u : event_times) {
    double s = 0.0;
    int d = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (records[j].time >= u) s += std::exp(eta[j] - c);
      if (records[j].time == u && records[j].event == 1) ++d;
    }
    a += d / s;
  }
  std::vector<double> s_hat(n);
  for (std::size_t i = 0; i < n; ++i)
    s_hat[i] = std::exp(-a * std::exp(eta[i] - c));
  return brier_from_survival(s_hat, records, t_eval);
}

KmCurve kaplan_meier(const std::vector<SurvivalRecord>& records) {
  validate_records(records);
  std::set<double> event_times;
  KmCurve curve;
  for (const auto& r : records) {
    if (r.event == 1)
      event_times.insert(r.time);
    else
      curve.censoring_times.push_back(r.time);
  }
  std::sort(curve.censoring_times.begin(), curve.censoring_times.end());

  double s = 1.0;
  for (double u : event_times) {
    KmPoint pt;
    pt.time = u;
    for (const auto& r : records) {
      if (r.time >= u) ++pt.at_risk;
      if (r.time == u && r.event == 1) ++pt.events;
    }
    s *= 1.0 - static_cast<double>(pt.events) / pt.at_risk;
    pt.survival = s;
    curve.points.push_back(pt);
  }
  return curve;
}

LogRankResult log_rank(const std::vector<SurvivalRecord>& records,
                       const std::vector<int>& group) {
  validate_records(records);
  const std::size_t n = records.size();
  if (group.size() != n)
    throw InvalidInput("log_rank: group labels do not match records");
  int n_groups = 0;
  for (int g : group) {
    if (g < 0) throw InvalidInput("log_rank: negative group label");
    n_groups = std::max(n_groups, g + 1);
  }
  if (n_groups < 2) throw InvalidInput("log_rank: needs at least two groups");
  std::vector<int> sizes(n_groups, 0);
  for (int g : group) ++sizes[g];
  for (int g = 0; g < n_groups; ++g)
    if (sizes[g] == 0)
      throw InvalidInput("log_rank: group " + std::to_string(g) + " is empty");

  std::set<double> event_times;
  for (const auto& r : records)
    if (r.event == 1) event_times.insert(r.time);

  Eigen::VectorXd oe = Eigen::VectorXd::Zero(n_groups - 1);
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n_groups - 1, n_groups - 1);
  for (double u : event_times) {
    std::vector<double> at(n_groups, 0.0), ev(n_groups, 0.0);
    double n_at = 0.0, d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (records[i].time >= u) {
        at[group[i]] += 1.0;
        n_at += 1.0;
      }
      if (records[i].time == u && records[i].event == 1) {
        ev[group[i]] += 1.0;
        d += 1.0;
      }
    }
    for (int g = 0; g + 1 < n_groups; ++g)
      oe(g) += ev[g] - d * at[g] / n_at;
    if (n_at > 1.0) {
      const double scale = d * (n_at - d) / (n_at - 1.0);
      for (int g = 0; g + 1 < n_groups; ++g)
        for (int h = 0; h + 1 < n_groups; ++h) {
          const double kron = g == h ? at[g] / n_at : 0.0;
          v(g, h) += scale * (kron - at[g] * at[h] / (n_at * n_at));
        }
    }
  }

  LogRankResult out;
  out.df = n_groups - 1;
  if (event_times.empty()) {
    out.statistic = 0.0;
    out.p_value = 1.0;
    return out;
  }
  const Eigen::VectorXd sol =
      v.completeOrthogonalDecomposition().solve(oe);
  out.statistic = std::max(0.0, oe.dot(sol));
  out.p_value = chisq_sf(out.statistic, out.df);
  return out;
}

HazardRow wald_row(double beta, double se) {
  if (!std::isfinite(beta) || !std::isfinite(se) || !(se > 0.0))
    throw InvalidInput("wald_row: needs finite beta and positive se");
  HazardRow row;
  row.hazard_ratio = std::exp(beta);
  row.ci_low = std::exp(beta - kWaldZ * se);
  row.ci_high = std::exp(beta + kWaldZ * se);
  row.p_value = 2.0 * normal_sf(std::abs(beta / se));
  return row;
}

std::vector<HazardRow> univariate_hr_table(
    const std::vector<CategoricalCovariate>& covariates,
    const std::vector<SurvivalRecord>& records) {
  validate_records(records);
  const std::size_t n = records.size();

  std::vector<HazardRow> table;
  for (const auto& cov : covariates) {
    if (cov.values.size() != n)
      throw InvalidInput("univariate_hr_table: covariate '" + cov.name +
                         "' does not match records");
    std::vector<std::size_t> rows;
    std::set<std::string> level_set;
    for (std::size_t i = 0; i < n; ++i) {
      if (cov.values[i].empty()) continue;
      rows.push_back(i);
      level_set.insert(cov.values[i]);
    }
    const std::vector<std::string> levels(level_set.begin(), level_set.end());
    const int n_used = static_cast<int>(rows.size());

    const auto skipped_row = [&](const std::string& level,
                                 const std::string& why) {
      HazardRow row;
      row.covariate = cov.name;
      row.level = level;
      row.n_used = n_used;
      row.skipped = true;
      row.note = why;
      return row;
    };

    if (levels.size() < 2) {
      table.push_back(skipped_row(levels.empty() ? "" : levels[0],
                                  "fewer than two levels present"));
      continue;
    }

    std::vector<SurvivalRecord> sub(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) sub[r] = records[rows[r]];

    // Binary: one row, second sorted level coded 1. Multi-level: one
    // one-vs-all row per level.
    std::vector<std::pair<std::string, std::string>> contrasts;
    if (levels.size() == 2) {
      contrasts.emplace_back(levels[1], "vs " + levels[0]);
    } else {
      for (const auto& level : levels)
        contrasts.emplace_back(level, "one-vs-all");
    }

    for (const auto& [level, note] : contrasts) {
      Eigen::MatrixXd ind(rows.size(), 1);
      for (std::size_t r = 0; r < rows.size(); ++r)
        ind(static_cast<Eigen::Index>(r), 0) =
            cov.values[rows[r]] == level ? 1.0 : 0.0;
      try {
        const CoxFit f = fit_cox(ind, sub, {cov.name + "=" + level});
        if (f.singular) {
          table.push_back(skipped_row(level, "singular information matrix"));
          continue;
        }
        const double se = 1.0 / std::sqrt(f.observed_information(0, 0));
        HazardRow row = wald_row(f.beta(0), se);
        row.covariate = cov.name;
        row.level = level;
        row.n_used = n_used;
        row.note = note;
        table.push_back(row);
      } catch (const NonConverged& e) {
        table.push_back(skipped_row(level, e.what()));
      } catch (const InvalidInput& e) {
        table.push_back(skipped_row(level, e.what()));
      }
    }
  }
  return table;
}

}  // namespace dnr
