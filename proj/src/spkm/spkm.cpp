#include "spkm/spkm.hpp"

#include <algorithm>
#include <cmath>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace dnr {

namespace {

void validate_rows(const Eigen::MatrixXd& embeddings) {
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
    if (std::abs(embeddings.row(i).norm() - 1.0) > 1e-6)
      throw InvalidInput("embedding row " + std::to_string(i) +
                         " is not unit norm");
}

int nearest_centroid(const Eigen::MatrixXd& centroids,
                     const Eigen::RowVectorXd& x) {
  int best = 0;
  double best_dot = centroids.row(0).dot(x);
  for (int c = 1; c < centroids.rows(); ++c) {
    double d = centroids.row(c).dot(x);
    if (d > best_dot) {
      best_dot = d;
      best = c;
    }
  }
  return best;
}

Eigen::MatrixXd seed_centroids(const Eigen::MatrixXd& x, int k,
                               std::uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  Rng rng = Rng::derive(seed, 0);
  std::vector<int> chosen;
  chosen.push_back(static_cast<int>(rng.uniform_int(n)));
  std::vector<double> dist(n);
  while (static_cast<int>(chosen.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = 2.0;
      for (int c : chosen)
        best = std::min(best, 1.0 - x.row(c).dot(x.row(i)));
      dist[i] = best * best;
      total += dist[i];
    }
    int pick = -1;
    if (total <= 0.0) {
      // Every point coincides with a chosen centroid; take the lowest
      // index not yet used to stay deterministic.
      for (int i = 0; i < n && pick < 0; ++i)
        if (std::find(chosen.begin(), chosen.end(), i) == chosen.end())
          pick = i;
      if (pick < 0) pick = 0;
    } else {
      double target = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
  }
  Eigen::MatrixXd centroids(k, x.cols());
  for (int c = 0; c < k; ++c) centroids.row(c) = x.row(chosen[c]);
  return centroids;
}

}  // namespace

ClusterModel fit_spkm_from(const Eigen::MatrixXd& x, Eigen::MatrixXd centroids,
                           int max_iter, double tol) {
  const int n = static_cast<int>(x.rows());
  const int k = static_cast<int>(centroids.rows());
  if (n < k) throw InvalidInput("need at least K points");
  if (k < 2) throw InvalidInput("K must be >= 2");
  if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
  validate_rows(x);

  ClusterModel model;
  model.k = k;
  model.assignments.assign(n, -1);

  std::vector<int> prev(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    for (int i = 0; i < n; ++i)
      model.assignments[i] = nearest_centroid(centroids, x.row(i));

    // Revive empty clusters with the point farthest from its centroid.
    for (int c = 0; c < k; ++c) {
      if (std::count(model.assignments.begin(), model.assignments.end(), c))
        continue;
      int farthest = -1;
      double worst = -1.0;
      for (int i = 0; i < n; ++i) {
        double d = 1.0 - centroids.row(model.assignments[i]).dot(x.row(i));
        if (d > worst) {
          worst = d;
          farthest = i;
        }
      }
      model.assignments[farthest] = c;
      centroids.row(c) = x.row(farthest);
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i)
      inertia += 1.0 - centroids.row(model.assignments[i]).dot(x.row(i));
    model.inertia_trace.push_back(inertia);
    model.inertia = inertia;
    model.iterations_run = iter + 1;

    if (model.assignments == prev) break;
    if (tol > 0.0 && model.inertia_trace.size() >= 2) {
      double drop = *(model.inertia_trace.end() - 2) - inertia;
      if (drop >= 0.0 && drop < tol) break;
    }
    prev = model.assignments;

    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(x.cols());
      int members = 0;
      for (int i = 0; i < n; ++i)
        if (model.assignments[i] == c) {
          mean += x.row(i);
          ++members;
        }
      double norm = mean.norm();
      if (members > 0 && norm > 1e-12) centroids.row(c) = mean / norm;
    }
  }

  model.centroids = std::move(centroids);
  return model;
}

ClusterModel fit_spkm(const Eigen::MatrixXd& x, int k, std::uint64_t seed,
                      int max_iter, double tol) {
  if (x.rows() < k) throw InvalidInput("need at least K points");
  if (k < 2) throw InvalidInput("K must be >= 2");
  validate_rows(x);
  bool all_same = true;
  for (Eigen::Index i = 1; i < x.rows() && all_same; ++i)
    all_same = (x.row(i) - x.row(0)).cwiseAbs().maxCoeff() < 1e-12;
  if (all_same)
    throw DegenerateData("all points identical, nothing to cluster");
  return fit_spkm_from(x, seed_centroids(x, k, seed), max_iter, tol);
}

int assign_cluster(const ClusterModel& model, Eigen::VectorXd z,
                   bool* renormalized) {
  if (model.centroids.rows() == 0) throw InvalidInput("model not fitted");
  if (z.size() != model.centroids.cols())
    throw InvalidInput("embedding dimension mismatch");
  double norm = z.norm();
  if (norm < 1e-12) throw InvalidInput("cannot assign the zero vector");
  if (renormalized) *renormalized = std::abs(norm - 1.0) > 1e-3;
  z /= norm;
  return nearest_centroid(model.centroids, z.transpose());
}

}  // namespace dnr
