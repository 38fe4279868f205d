#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace dnr {

// Dictionary V of Eq. (2): one unit-norm embedding per dataset sample,
// refreshed by momentum rather than recomputed.
struct MemoryBank {
  Eigen::MatrixXd vectors;  // N x d, unit rows
  double momentum = 0.5;
  double tau = 0.5;
  // Eq. (2) sums the denominator over k = 1..N, self included; the flag
  // exists for sensitivity checks only.
  bool include_self = true;

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

struct NeighborSets {
  // S_i: ids of spatially overlapping patches, ascending, symmetric.
  std::vector<std::vector<int>> spatial;
  // N_i: top-k feature-space neighbors, descending similarity.
  std::vector<std::vector<int>> feature;
};

MemoryBank init_bank(int n, int d, std::uint64_t seed, double momentum = 0.5,
                     double tau = 0.5);
void validate_bank(const MemoryBank& bank);

// p(.|i) of Eq. (2) over all N samples.
Eigen::VectorXd similarity_probs(const MemoryBank& bank, int i);

// row_i <- normalize(m*row_i + (1-m)*z_new). Returns false (row kept) when
// the blend cancels to zero, the StalledUpdate case.
bool update(MemoryBank& bank, int i, const Eigen::VectorXd& z_new);

// The k ids j != i with highest z_j . z_i, ties by ascending id.
std::vector<int> top_k_neighbors(const MemoryBank& bank, int i, int k);

void refresh_feature_neighbors(NeighborSets& neighbors,
                               const MemoryBank& bank, int k);

// S_i from tile positions: patches on the same slide whose grid cells are
// adjacent (connectivity 4 or 8).
struct GridPos {
  int slide = 0;
  int row = 0;
  int col = 0;
};
std::vector<std::vector<int>> build_spatial_neighbors(
    const std::vector<GridPos>& positions, int connectivity = 4);

}  // namespace dnr
