#include "dnr/dnr.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "core/errors.hpp"
#include "pipeline/pipeline.hpp"
#include "spkm/spkm.hpp"
#include "survival/survival.hpp"

namespace {

thread_local std::string g_last_error;

dnr_status fail(dnr_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

// Exceptions cross the C boundary as status codes.
template <typename Fn>
dnr_status guarded(Fn&& fn) {
  try {
    const dnr_status s = fn();
    if (s == DNR_OK) g_last_error.clear();
    return s;
  } catch (const dnr::InvalidInput& e) {
    return fail(DNR_ERR_INVALID_INPUT, e.what());
  } catch (const dnr::IoError& e) {
    return fail(DNR_ERR_IO, e.what());
  } catch (const dnr::NumericError& e) {
    return fail(DNR_ERR_NUMERIC, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(DNR_ERR_INVALID_INPUT, std::string("config: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(DNR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DNR_ERR_INTERNAL, e.what());
  }
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<dnr::SurvivalRecord> make_records(const double* time,
                                              const int32_t* event,
                                              int32_t n) {
  if (!time || !event) throw dnr::InvalidInput("null time/event argument");
  if (n < 1) throw dnr::InvalidInput("n must be >= 1");
  std::vector<dnr::SurvivalRecord> records(static_cast<std::size_t>(n));
  for (int32_t i = 0; i < n; ++i) {
    records[i].patient_id = "r" + std::to_string(i);
    records[i].time = time[i];
    records[i].event = event[i];
  }
  return records;
}

}  // namespace

struct dnr_cox {
  dnr::CoxFit fit;
  Eigen::MatrixXd covariance;  // NaN entries when information is singular
};

struct dnr_km {
  dnr::KmCurve curve;
};

extern "C" {

const char* dnr_version(void) { return "0.1.0"; }

const char* dnr_last_error(void) { return g_last_error.c_str(); }

void dnr_string_free(char* s) { std::free(s); }

dnr_status dnr_run_stage(const char* stage, const char* config_json,
                         char** manifest_json) {
  return guarded([&]() -> dnr_status {
    if (!stage || !config_json || !manifest_json)
      throw dnr::InvalidInput("null argument");
    const nlohmann::json config = nlohmann::json::parse(config_json);
    const nlohmann::json manifest = dnr::run_stage(stage, config);
    *manifest_json = copy_string(manifest.dump(2) + "\n");
    return DNR_OK;
  });
}

dnr_status dnr_default_config(char** config_json) {
  return guarded([&]() -> dnr_status {
    if (!config_json) throw dnr::InvalidInput("null argument");
    *config_json = copy_string(dnr::default_config().dump(2) + "\n");
    return DNR_OK;
  });
}

dnr_status dnr_cox_fit(const double* x, int32_t n, int32_t p,
                       const double* time, const int32_t* event,
                       dnr_cox** out) {
  return guarded([&]() -> dnr_status {
    if (!x || !out) throw dnr::InvalidInput("null argument");
    if (p < 1) throw dnr::InvalidInput("p must be >= 1");
    const auto records = make_records(time, event, n);
    Eigen::MatrixXd xm(n, p);
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < p; ++j) xm(i, j) = x[i * p + j];

    auto handle = std::make_unique<dnr_cox>();
    handle->fit = dnr::fit_cox(xm, records);
    Eigen::LLT<Eigen::MatrixXd> llt(handle->fit.observed_information);
    if (llt.info() == Eigen::Success)
      handle->covariance = llt.solve(Eigen::MatrixXd::Identity(p, p));
    else
      handle->covariance = Eigen::MatrixXd::Constant(
          p, p, std::numeric_limits<double>::quiet_NaN());
    *out = handle.release();
    return DNR_OK;
  });
}

int32_t dnr_cox_converged(const dnr_cox* fit) {
  return fit && fit->fit.converged ? 1 : 0;
}

int32_t dnr_cox_singular(const dnr_cox* fit) {
  return fit && fit->fit.singular ? 1 : 0;
}

double dnr_cox_loglik(const dnr_cox* fit) {
  return fit ? fit->fit.log_likelihood
             : std::numeric_limits<double>::quiet_NaN();
}

dnr_status dnr_cox_coef(const dnr_cox* fit, int32_t j, double* beta,
                        double* se) {
  return guarded([&]() -> dnr_status {
    if (!fit) throw dnr::InvalidInput("null handle");
    if (j < 0 || j >= fit->fit.beta.size())
      throw dnr::InvalidInput("coefficient index out of range");
    if (beta) *beta = fit->fit.beta[j];
    if (se) *se = std::sqrt(fit->covariance(j, j));
    return DNR_OK;
  });
}

void dnr_cox_destroy(dnr_cox* fit) { delete fit; }

dnr_status dnr_km_create(const double* time, const int32_t* event, int32_t n,
                         dnr_km** out) {
  return guarded([&]() -> dnr_status {
    if (!out) throw dnr::InvalidInput("null argument");
    auto handle = std::make_unique<dnr_km>();
    handle->curve = dnr::kaplan_meier(make_records(time, event, n));
    *out = handle.release();
    return DNR_OK;
  });
}

int32_t dnr_km_size(const dnr_km* km) {
  return km ? static_cast<int32_t>(km->curve.points.size()) : 0;
}

dnr_status dnr_km_point(const dnr_km* km, int32_t i, double* time,
                        double* survival, int32_t* at_risk, int32_t* events) {
  return guarded([&]() -> dnr_status {
    if (!km) throw dnr::InvalidInput("null handle");
    if (i < 0 || i >= dnr_km_size(km))
      throw dnr::InvalidInput("curve point index out of range");
    const dnr::KmPoint& p = km->curve.points[static_cast<std::size_t>(i)];
    if (time) *time = p.time;
    if (survival) *survival = p.survival;
    if (at_risk) *at_risk = p.at_risk;
    if (events) *events = p.events;
    return DNR_OK;
  });
}

void dnr_km_destroy(dnr_km* km) { delete km; }

dnr_status dnr_c_index(const double* eta, const double* time,
                       const int32_t* event, int32_t n, double* value,
                       int32_t* defined) {
  return guarded([&]() -> dnr_status {
    if (!eta || !value) throw dnr::InvalidInput("null argument");
    const auto records = make_records(time, event, n);
    const dnr::CIndexResult r =
        dnr::c_index(std::vector<double>(eta, eta + n), records);
    *value = r.value;
    if (defined) *defined = r.defined ? 1 : 0;
    return DNR_OK;
  });
}

dnr_status dnr_log_rank(const double* time, const int32_t* event,
                        const int32_t* group, int32_t n, double* statistic,
                        int32_t* df, double* p_value) {
  return guarded([&]() -> dnr_status {
    if (!group) throw dnr::InvalidInput("null argument");
    const auto records = make_records(time, event, n);
    const dnr::LogRankResult r =
        dnr::log_rank(records, std::vector<int>(group, group + n));
    if (statistic) *statistic = r.statistic;
    if (df) *df = r.df;
    if (p_value) *p_value = r.p_value;
    return DNR_OK;
  });
}

dnr_status dnr_spkm_fit(const double* x, int32_t n, int32_t d, int32_t k,
                        uint64_t seed, int32_t* assignments, double* centroids,
                        double* inertia) {
  return guarded([&]() -> dnr_status {
    if (!x) throw dnr::InvalidInput("null argument");
    if (n < 1 || d < 1) throw dnr::InvalidInput("n and d must be >= 1");
    Eigen::MatrixXd xm(n, d);
    for (int32_t i = 0; i < n; ++i)
      for (int32_t j = 0; j < d; ++j) xm(i, j) = x[i * d + j];
    const dnr::ClusterModel model = dnr::fit_spkm(xm, k, seed);
    if (assignments)
      for (int32_t i = 0; i < n; ++i)
        assignments[i] = model.assignments[static_cast<std::size_t>(i)];
    if (centroids)
      for (int32_t g = 0; g < k; ++g)
        for (int32_t j = 0; j < d; ++j)
          centroids[g * d + j] = model.centroids(g, j);
    if (inertia) *inertia = model.inertia;
    return DNR_OK;
  });
}

}  // extern "C"
