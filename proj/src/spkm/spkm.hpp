#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace dnr {

struct ClusterModel {
  Eigen::MatrixXd centroids;  // K x d, unit rows
  int k = 0;
  double inertia = 0.0;  // sum of cosine distances to assigned centroids
  int iterations_run = 0;
  std::vector<double> inertia_trace;  // inertia after each assignment pass
  std::vector<int> assignments;       // training-data labels
};

// Spherical k-means: cosine distance 1 - dot on unit vectors, centroids the
// normalized member means, k-means++ style seeding on the same distance.
ClusterModel fit_spkm(const Eigen::MatrixXd& embeddings, int k,
                      std::uint64_t seed, int max_iter = 100,
                      double tol = 0.0);

// Lloyd iterations from explicit starting centroids (fit_spkm seeds then
// delegates here).
ClusterModel fit_spkm_from(const Eigen::MatrixXd& embeddings,
                           Eigen::MatrixXd centroids, int max_iter = 100,
                           double tol = 0.0);

// argmax_k mu_k . z, ties to the smallest k. Non-unit z is normalized;
// *renormalized is set when the deviation exceeded 1e-3.
int assign_cluster(const ClusterModel& model, Eigen::VectorXd z,
                   bool* renormalized = nullptr);

}  // namespace dnr
