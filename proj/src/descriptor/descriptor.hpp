#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace dnr {

// One clustered patch on a slide grid; descriptors pool all slides of a
// patient.
struct GridPatch {
  int slide = 0;
  int row = 0;
  int col = 0;
  int cluster = 0;
};

// h = [h^C, h^T]: cluster frequencies plus the row-normalized matrix of
// ordered neighbor-pair transitions (row = conditioning cluster).
struct PatientDescriptor {
  std::string patient_id;
  int k = 0;
  Eigen::VectorXd h_c;                     // K
  Eigen::MatrixXd h_t;                     // K x K, rows sum to 1 or 0
  std::vector<std::uint8_t> row_observed;  // h_t rows with any pair counted
};

PatientDescriptor build_descriptor(const std::string& patient_id,
                                   const std::vector<GridPatch>& patches,
                                   int k, int connectivity = 4);

Eigen::VectorXd flatten(const PatientDescriptor& d);  // length K + K^2
PatientDescriptor unflatten(const std::string& patient_id,
                            const Eigen::VectorXd& h, int k);

// Column labels hC_k / hT_j_k matching the flatten order.
std::vector<std::string> descriptor_feature_names(int k);

}  // namespace dnr
