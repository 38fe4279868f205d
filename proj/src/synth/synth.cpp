#include "synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace dnr {
namespace {

void validate(const SynthConfig& c) {
  if (c.n_patients < 1) throw InvalidInput("synth: n_patients must be >= 1");
  if (c.slides_per_patient < 1)
    throw InvalidInput("synth: slides_per_patient must be >= 1");
  if (c.grid_rows < 1 || c.grid_cols < 1)
    throw InvalidInput("synth: grid dimensions must be >= 1");
  if (c.k_true < 2) throw InvalidInput("synth: k_true must be >= 2");
  if (!(c.flip_prob >= 0.0 && c.flip_prob <= 1.0))
    throw InvalidInput("synth: flip_prob must be in [0, 1]");
  if (c.smoothing_sweeps < 0)
    throw InvalidInput("synth: smoothing_sweeps must be >= 0");
  if (c.feature_dim < 1) throw InvalidInput("synth: feature_dim must be >= 1");
  if (!(c.sigma >= 0.0)) throw InvalidInput("synth: sigma must be >= 0");
  const auto want = static_cast<Eigen::Index>(c.k_true) * (c.k_true + 1);
  if (c.beta_true.size() != 0 && c.beta_true.size() != want)
    throw InvalidInput("synth: beta_true must have length k_true + k_true^2");
  if (!(c.censor_target >= 0.0 && c.censor_target < 1.0))
    throw InvalidInput("synth: censor_target must be in [0, 1)");
  if (!(c.baseline_median_days > 0.0))
    throw InvalidInput("synth: baseline_median_days must be > 0");
}

std::string pad_int(const char* prefix, int value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, value);
  return buf;
}

// Iterated majority-vote relaxation over a raster scan, updated in place so
// smoothing propagates within a sweep. Each visit randomizes the cell with
// probability flip_prob, otherwise takes the majority of the cell and its
// 4-neighborhood (ties broken uniformly).
std::vector<int> label_field(int rows, int cols, int k, double flip_prob,
                             int sweeps, Rng& rng) {
  std::vector<int> lab(static_cast<std::size_t>(rows) * cols);
  for (auto& l : lab) l = static_cast<int>(rng.uniform_int(k));
  std::vector<int> count(k);
  std::vector<int> tied;
  for (int s = 0; s < sweeps; ++s) {
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t at = static_cast<std::size_t>(r) * cols + c;
        if (rng.uniform() < flip_prob) {
          lab[at] = static_cast<int>(rng.uniform_int(k));
          continue;
        }
        std::fill(count.begin(), count.end(), 0);
        ++count[lab[at]];
        if (r > 0) ++count[lab[at - cols]];
        if (r + 1 < rows) ++count[lab[at + cols]];
        if (c > 0) ++count[lab[at - 1]];
        if (c + 1 < cols) ++count[lab[at + 1]];
        const int best = *std::max_element(count.begin(), count.end());
        tied.clear();
        for (int g = 0; g < k; ++g)
          if (count[g] == best) tied.push_back(g);
        lab[at] = tied.size() == 1
                      ? tied[0]
                      : tied[rng.uniform_int(tied.size())];
      }
    }
  }
  return lab;
}

// Smallest censoring hazard whose expected censored fraction meets the
// target: mean_i lc / (lc + rate_i) = target, increasing in lc.
double tune_censor_hazard(const std::vector<double>& rates, double target) {
  if (target <= 0.0) return 0.0;
  auto expected = [&rates](double lc) {
    double s = 0.0;
    for (double a : rates) s += lc / (lc + a);
    return s / static_cast<double>(rates.size());
  };
  double hi = *std::max_element(rates.begin(), rates.end());
  int doublings = 0;
  while (expected(hi) < target) {
    hi *= 2.0;
    if (++doublings > 200)
      throw InternalError("synth: censoring target not bracketed");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (expected(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SynthCohort generate(const SynthConfig& config) {
  validate(config);
  const int k = config.k_true;
  const int d = config.feature_dim;
  const auto n_feat = static_cast<Eigen::Index>(k) * (k + 1);

  SynthCohort out;
  out.config = config;
  out.beta_true = config.beta_true.size() == 0
                      ? Eigen::VectorXd::Zero(n_feat)
                      : config.beta_true;
  out.config.beta_true = out.beta_true;
  out.baseline_rate = std::log(2.0) / config.baseline_median_days;

  // Stream 0: cohort-level prototypes. Stream 1 + i: everything for
  // patient i (labels, feature noise, event and censor uniforms).
  Rng proto_rng = Rng::derive(config.seed, 0);
  out.prototypes.resize(k, d);
  for (int g = 0; g < k; ++g)
    out.prototypes.row(g) = proto_rng.unit_vector(d).transpose();

  const std::size_t per_slide =
      static_cast<std::size_t>(config.grid_rows) * config.grid_cols;
  out.patches.reserve(static_cast<std::size_t>(config.n_patients) *
                      config.slides_per_patient * per_slide);
  out.descriptors.reserve(config.n_patients);
  out.records.reserve(config.n_patients);

  std::vector<double> rates(config.n_patients);
  std::vector<double> u_event(config.n_patients);
  std::vector<double> u_censor(config.n_patients);

  for (int i = 0; i < config.n_patients; ++i) {
    Rng rng = Rng::derive(config.seed, 1 + static_cast<std::uint64_t>(i));
    const std::string patient = pad_int("P", i, 4);
    std::vector<GridPatch> cells;
    cells.reserve(per_slide * config.slides_per_patient);
    for (int s = 0; s < config.slides_per_patient; ++s) {
      const std::string slide = patient + pad_int("_S", s, 1);
      const std::vector<int> lab =
          label_field(config.grid_rows, config.grid_cols, k, config.flip_prob,
                      config.smoothing_sweeps, rng);
      for (int r = 0; r < config.grid_rows; ++r) {
        for (int c = 0; c < config.grid_cols; ++c) {
          const int g = lab[static_cast<std::size_t>(r) * config.grid_cols + c];
          SynthPatch p;
          p.patch_id = slide + pad_int("_r", r, 3) + pad_int("_c", c, 3);
          p.patient_id = patient;
          p.slide_id = slide;
          p.slide = s;
          p.row = r;
          p.col = c;
          p.cluster = g;
          p.feature = out.prototypes.row(g).transpose();
          if (config.sigma > 0.0)
            p.feature += config.sigma * rng.normal_vector(d);
          out.patches.push_back(std::move(p));
          cells.push_back({s, r, c, g});
        }
      }
    }
    out.descriptors.push_back(build_descriptor(patient, cells, k));
    const double eta = flatten(out.descriptors.back()).dot(out.beta_true);
    rates[i] = out.baseline_rate * std::exp(eta);
    u_event[i] = rng.uniform_pos();
    u_censor[i] = rng.uniform_pos();
  }

  out.censor_rate_param = tune_censor_hazard(rates, config.censor_target);
  int censored = 0;
  for (int i = 0; i < config.n_patients; ++i) {
    const double t_event = -std::log(u_event[i]) / rates[i];
    SurvivalRecord rec;
    rec.patient_id = out.descriptors[i].patient_id;
    if (out.censor_rate_param > 0.0) {
      const double t_censor = -std::log(u_censor[i]) / out.censor_rate_param;
      rec.event = t_event <= t_censor ? 1 : 0;
      rec.time = std::min(t_event, t_censor);
    } else {
      rec.event = 1;
      rec.time = t_event;
    }
    censored += 1 - rec.event;
    out.records.push_back(std::move(rec));
  }
  out.censor_rate_achieved =
      static_cast<double>(censored) / config.n_patients;
  return out;
}

CoxSim simulate_cox(int n, const Eigen::VectorXd& beta, double censor_target,
                    std::uint64_t seed) {
  if (n < 2) throw InvalidInput("simulate_cox: n must be >= 2");
  if (!(censor_target >= 0.0 && censor_target < 1.0))
    throw InvalidInput("simulate_cox: censor_target must be in [0, 1)");
  const auto p = beta.size();

  CoxSim out;
  out.x.resize(n, p);
  std::vector<double> rates(n);
  std::vector<double> u_event(n);
  std::vector<double> u_censor(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng::derive(seed, 1 + static_cast<std::uint64_t>(i));
    out.x.row(i) = rng.normal_vector(static_cast<int>(p)).transpose();
    rates[i] = std::exp(out.x.row(i).dot(beta));
    u_event[i] = rng.uniform_pos();
    u_censor[i] = rng.uniform_pos();
  }

  const double lc = tune_censor_hazard(rates, censor_target);
  int censored = 0;
  for (int i = 0; i < n; ++i) {
    const double t_event = -std::log(u_event[i]) / rates[i];
    SurvivalRecord rec;
    rec.patient_id = pad_int("r", i, 5);
    if (lc > 0.0) {
      const double t_censor = -std::log(u_censor[i]) / lc;
      rec.event = t_event <= t_censor ? 1 : 0;
      rec.time = std::min(t_event, t_censor);
    } else {
      rec.event = 1;
      rec.time = t_event;
    }
    censored += 1 - rec.event;
    out.records.push_back(std::move(rec));
  }
  out.censor_rate_achieved = static_cast<double>(censored) / n;
  return out;
}

}  // namespace dnr
