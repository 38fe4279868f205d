#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dnr/objective.hpp"
#include "embank/embank.hpp"

namespace dnr {

struct TrainConfig {
  int latent_dim = 8;
  int epochs_per_phase = 20;
  int rounds = 3;
  double lambda = 1e-3;
  double tau = 0.5;
  double momentum = 0.5;
  double learning_rate = 0.1;
  int batch_size = 64;
  int k_neighbors = 5;
  std::uint64_t seed = 0;
  bool include_self = true;
  // Runs the identical epoch schedule with the similarity losses disabled;
  // with lambda = 0 the two modes must produce bitwise-equal codecs.
  bool mse_only = false;
};

struct EpochReport {
  int epoch = 0;
  std::string phase;
  double mse = 0.0;
  double divide = 0.0;
  double rule = 0.0;
  double total = 0.0;
  double within_s_cosine = 0.0;
};

struct TrainResult {
  LinearCodec codec;
  MemoryBank bank;
  NeighborSets neighbors;
  std::vector<EpochReport> trace;
  std::vector<EntropyPartition> partitions;  // one per Rule round
  int stalled_updates = 0;
};

// Three phases: (a) MSE pretraining, (b) MSE + Divide on everything,
// (c) `rounds` rounds of MSE + Divide/Rule split by the entropy curriculum.
// Entropies are computed once entering phase (c) so the per-round expansion
// sets are nested; N_i is refreshed from the moving bank at each round.
TrainResult train(const Eigen::MatrixXd& features,
                  const Eigen::MatrixXd& targets,
                  const std::vector<std::vector<int>>& spatial,
                  const TrainConfig& config);

// Mean over samples of the mean cosine similarity between a sample's bank
// row and the rows of its S_i.
double mean_within_s_cosine(const MemoryBank& bank,
                            const std::vector<std::vector<int>>& spatial);

}  // namespace dnr
