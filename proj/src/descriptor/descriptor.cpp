#include "descriptor/descriptor.hpp"

#include <map>
#include <tuple>

#include "core/errors.hpp"

namespace dnr {

PatientDescriptor build_descriptor(const std::string& patient_id,
                                   const std::vector<GridPatch>& patches,
                                   int k, int connectivity) {
  if (patches.empty())
    throw InvalidInput("patient " + patient_id + " has no patches");
  if (k < 1) throw InvalidInput("K must be positive");
  if (connectivity != 4 && connectivity != 8)
    throw InvalidInput("connectivity must be 4 or 8");

  std::map<std::tuple<int, int, int>, int> cluster_at;
  for (const auto& p : patches) {
    if (p.cluster < 0 || p.cluster >= k)
      throw InvalidInput("cluster id " + std::to_string(p.cluster) +
                         " out of range for K=" + std::to_string(k));
    if (!cluster_at.emplace(std::make_tuple(p.slide, p.row, p.col), p.cluster)
             .second)
      throw InvalidInput("duplicate grid cell for patient " + patient_id);
  }

  PatientDescriptor d;
  d.patient_id = patient_id;
  d.k = k;
  d.h_c = Eigen::VectorXd::Zero(k);
  d.h_t = Eigen::MatrixXd::Zero(k, k);
  d.row_observed.assign(k, 0);

  for (const auto& p : patches) d.h_c(p.cluster) += 1.0;
  d.h_c /= static_cast<double>(patches.size());

  // Each adjacency is counted in both directions; scanning east/south(/SE/SW)
  // per cell visits every unordered pair once.
  for (const auto& p : patches) {
    const int deltas4[2][2] = {{0, 1}, {1, 0}};
    const int deltas8[4][2] = {{0, 1}, {1, 0}, {1, 1}, {1, -1}};
    int n_deltas = connectivity == 4 ? 2 : 4;
    for (int t = 0; t < n_deltas; ++t) {
      int dr = connectivity == 4 ? deltas4[t][0] : deltas8[t][0];
      int dc = connectivity == 4 ? deltas4[t][1] : deltas8[t][1];
      auto it = cluster_at.find(
          std::make_tuple(p.slide, p.row + dr, p.col + dc));
      if (it == cluster_at.end()) continue;
      d.h_t(p.cluster, it->second) += 1.0;
      d.h_t(it->second, p.cluster) += 1.0;
    }
  }

  for (int j = 0; j < k; ++j) {
    double total = d.h_t.row(j).sum();
    if (total > 0.0) {
      d.h_t.row(j) /= total;
      d.row_observed[j] = 1;
    }
  }
  return d;
}

Eigen::VectorXd flatten(const PatientDescriptor& d) {
  Eigen::VectorXd h(d.k + d.k * d.k);
  h.head(d.k) = d.h_c;
  for (int j = 0; j < d.k; ++j)
    h.segment(d.k + j * d.k, d.k) = d.h_t.row(j).transpose();
  return h;
}

PatientDescriptor unflatten(const std::string& patient_id,
                            const Eigen::VectorXd& h, int k) {
  if (h.size() != k + k * k)
    throw InvalidInput("descriptor length " + std::to_string(h.size()) +
                       " does not match K=" + std::to_string(k));
  PatientDescriptor d;
  d.patient_id = patient_id;
  d.k = k;
  d.h_c = h.head(k);
  d.h_t.resize(k, k);
  d.row_observed.assign(k, 0);
  for (int j = 0; j < k; ++j) {
    d.h_t.row(j) = h.segment(k + j * k, k).transpose();
    d.row_observed[j] = d.h_t.row(j).sum() > 0.0 ? 1 : 0;
  }
  return d;
}

std::vector<std::string> descriptor_feature_names(int k) {
  std::vector<std::string> names;
  names.reserve(k + k * k);
  for (int i = 0; i < k; ++i) names.push_back("hC_" + std::to_string(i));
  for (int j = 0; j < k; ++j)
    for (int i = 0; i < k; ++i)
      names.push_back("hT_" + std::to_string(j) + "_" + std::to_string(i));
  return names;
}

}  // namespace dnr
