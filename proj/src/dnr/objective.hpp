#pragma once

#include <vector>

#include <Eigen/Core>

#include "embank/embank.hpp"

namespace dnr {

// Encoder phi maps input features to the latent space, decoder psi maps
// back. Latents are L2-normalized before any similarity computation; the
// reconstruction path uses them raw.
struct LinearCodec {
  Eigen::MatrixXd phi;  // d x D_in
  Eigen::MatrixXd psi;  // D_out x d
};

struct MseResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_phi;
  Eigen::MatrixXd grad_psi;
};

// ||target - psi phi input||^2 / D_out with analytic gradients.
MseResult mse_loss(const LinearCodec& codec, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& target);

struct SimilarityLoss {
  double loss = 0.0;
  Eigen::MatrixXd grad;  // one row per batch entry, d columns
};

// L_Divide over the given batch: -sum_i log sum_{j in S_i} p(j|i), where
// each sample's live embedding (row of `live`, unit norm) stands in for its
// own bank slot and all other bank rows are constants.
SimilarityLoss divide_loss(const MemoryBank& bank,
                           const NeighborSets& neighbors,
                           const std::vector<int>& batch,
                           const Eigen::MatrixXd& live);

// L_Rule: identical form with positives S_i union N_i.
SimilarityLoss rule_loss(const MemoryBank& bank, const NeighborSets& neighbors,
                         const std::vector<int>& batch,
                         const Eigen::MatrixXd& live);

// Entropy of p(.|i) with the self term dropped and the rest renormalized
// (set self_excluded = false to use the full distribution).
double compute_entropy(const MemoryBank& bank, int i,
                       bool self_excluded = true);

struct EntropyPartition {
  std::vector<double> entropies;
  std::vector<int> instance_set;   // B_inst, ascending ids
  std::vector<int> expansion_set;  // complement, ascending ids
  int round = 0;
  int total_rounds = 1;
};

// expansion_set = the floor(N*round/total_rounds) lowest-entropy samples,
// ties by ascending id.
EntropyPartition schedule_partition(const std::vector<double>& entropies,
                                    int round, int total_rounds);

}  // namespace dnr
