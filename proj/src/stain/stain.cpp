#include "stain/stain.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "core/errors.hpp"

namespace dnr {

namespace {

double percentile_interp(std::vector<double> sorted, double p) {
  double rank = p / 100.0 * static_cast<double>(sorted.size() - 1);
  auto lo = static_cast<std::size_t>(rank);
  if (lo + 1 >= sorted.size()) return sorted.back();
  double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

Eigen::Vector3d clamp_to_positive_octant(Eigen::Vector3d v) {
  v = v.cwiseMax(0.0);
  double n = v.norm();
  if (n == 0.0) throw DegenerateTissue("stain direction collapsed to zero");
  return v / n;
}

}  // namespace

void validate_patch(const RgbPatch& patch) {
  if (patch.width <= 0 || patch.height <= 0)
    throw InvalidInput("patch must be non-empty");
  std::size_t want = 3ull * static_cast<std::size_t>(patch.width) *
                     static_cast<std::size_t>(patch.height);
  if (patch.pixels.size() != want)
    throw InvalidInput("patch pixel buffer has " +
                       std::to_string(patch.pixels.size()) + " bytes, want " +
                       std::to_string(want));
}

void validate_stains(const StainMatrix& stains) {
  for (const auto* v : {&stains.h, &stains.e}) {
    if (std::abs(v->norm() - 1.0) > 1e-6)
      throw InvalidInput("stain vectors must be unit norm");
    if (v->minCoeff() < -1e-9)
      throw InvalidInput("stain vectors must be non-negative");
  }
  if (stains.h.dot(stains.e) > 1.0 - 1e-12)
    throw InvalidInput("stain vectors must be angularly separated");
}

Eigen::MatrixX3d rgb_to_od(const RgbPatch& patch, double background_intensity) {
  validate_patch(patch);
  if (!(background_intensity > 0.0))
    throw InvalidInput("background intensity must be positive");
  const std::size_t n =
      static_cast<std::size_t>(patch.width) * patch.height;
  Eigen::MatrixX3d od(n, 3);
  const double denom = background_intensity + 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      double v = -std::log10((patch.pixels[3 * i + c] + 1.0) / denom);
      od(static_cast<Eigen::Index>(i), c) = std::max(v, 0.0);
    }
  return od;
}

StainMatrix estimate_stain_matrix(const Eigen::MatrixX3d& od,
                                  double od_threshold,
                                  double angle_percentile) {
  if (!(angle_percentile > 0.0 && angle_percentile < 50.0))
    throw InvalidInput("angle percentile must be in (0, 50)");
  std::vector<Eigen::Index> fg;
  for (Eigen::Index i = 0; i < od.rows(); ++i)
    if (od.row(i).norm() > od_threshold) fg.push_back(i);
  if (fg.size() < 2)
    throw DegenerateTissue("fewer than 2 foreground pixels above OD " +
                           std::to_string(od_threshold));

  Eigen::MatrixX3d x(fg.size(), 3);
  for (std::size_t i = 0; i < fg.size(); ++i) x.row(i) = od.row(fg[i]);
  Eigen::RowVector3d mean = x.colwise().mean();
  Eigen::MatrixX3d centered = x.rowwise() - mean;
  Eigen::Matrix3d cov =
      centered.transpose() * centered / static_cast<double>(fg.size() - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const auto& evals = eig.eigenvalues();  // ascending
  if (evals(1) <= std::max(evals(2), 0.0) * 1e-9 + 1e-15)
    throw DegenerateTissue("OD covariance is rank-deficient");

  Eigen::Vector3d e1 = eig.eigenvectors().col(2);
  Eigen::Vector3d e2 = eig.eigenvectors().col(1);
  if ((x * e1).sum() < 0.0) e1 = -e1;
  Eigen::Index imax;
  e2.cwiseAbs().maxCoeff(&imax);
  if (e2(imax) < 0.0) e2 = -e2;

  // Angles of the raw (uncentered) OD cloud within the principal plane.
  std::vector<double> phi(fg.size());
  for (std::size_t i = 0; i < fg.size(); ++i)
    phi[i] = std::atan2(x.row(i).dot(e2), x.row(i).dot(e1));
  std::sort(phi.begin(), phi.end());
  double lo = percentile_interp(phi, angle_percentile);
  double hi = percentile_interp(phi, 100.0 - angle_percentile);

  Eigen::Vector3d a = clamp_to_positive_octant(std::cos(lo) * e1 +
                                               std::sin(lo) * e2);
  Eigen::Vector3d b = clamp_to_positive_octant(std::cos(hi) * e1 +
                                               std::sin(hi) * e2);
  // Hematoxylin absorbs more red.
  StainMatrix s;
  if (a(0) > b(0) || (a(0) == b(0) && a(1) >= b(1))) {
    s.h = a;
    s.e = b;
  } else {
    s.h = b;
    s.e = a;
  }
  validate_stains(s);
  return s;
}

HePatch deconvolve(const Eigen::MatrixX3d& od, const StainMatrix& stains,
                   int width, int height) {
  validate_stains(stains);
  if (static_cast<Eigen::Index>(width) * height != od.rows())
    throw InvalidInput("OD row count does not match patch dimensions");
  const double g = stains.h.dot(stains.e);
  const double det = 1.0 - g * g;
  HePatch out;
  out.width = width;
  out.height = height;
  out.channels.resize(2 * static_cast<std::size_t>(od.rows()));
  for (Eigen::Index i = 0; i < od.rows(); ++i) {
    const double a = od.row(i).dot(stains.h);
    const double b = od.row(i).dot(stains.e);
    double ch = (a - g * b) / det;
    double ce = (b - g * a) / det;
    if (ch < 0.0 || ce < 0.0) {
      // Best point on each axis; the 2-variable NNLS optimum lies there
      // whenever the unconstrained solution leaves the quadrant.
      double h_only = std::max(a, 0.0);
      double e_only = std::max(b, 0.0);
      double res_h = h_only * h_only - 2.0 * h_only * a;
      double res_e = e_only * e_only - 2.0 * e_only * b;
      if (res_h <= res_e) {
        ch = h_only;
        ce = 0.0;
      } else {
        ch = 0.0;
        ce = e_only;
      }
    }
    out.channels[2 * static_cast<std::size_t>(i)] = ch;
    out.channels[2 * static_cast<std::size_t>(i) + 1] = ce;
  }
  return out;
}

HePatch transform_patch(const RgbPatch& patch, StainMatrix* stains_out,
                        double background_intensity, double od_threshold,
                        double angle_percentile) {
  Eigen::MatrixX3d od = rgb_to_od(patch, background_intensity);
  StainMatrix stains =
      estimate_stain_matrix(od, od_threshold, angle_percentile);
  if (stains_out) *stains_out = stains;
  return deconvolve(od, stains, patch.width, patch.height);
}

}  // namespace dnr
