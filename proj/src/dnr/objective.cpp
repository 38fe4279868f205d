#include "dnr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core/errors.hpp"

namespace dnr {

MseResult mse_loss(const LinearCodec& codec, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& target) {
  if (codec.phi.cols() != input.size())
    throw InvalidInput("encoder input dimension mismatch");
  if (codec.psi.cols() != codec.phi.rows())
    throw InvalidInput("decoder latent dimension mismatch");
  if (codec.psi.rows() != target.size())
    throw InvalidInput("decoder output dimension mismatch");
  const double scale = 1.0 / static_cast<double>(target.size());
  Eigen::VectorXd latent = codec.phi * input;
  Eigen::VectorXd residual = codec.psi * latent - target;
  MseResult out;
  out.loss = residual.squaredNorm() * scale;
  out.grad_psi = 2.0 * scale * residual * latent.transpose();
  out.grad_phi = 2.0 * scale * (codec.psi.transpose() * residual) *
                 input.transpose();
  return out;
}

namespace {

// Shared form of Eqs. (2)/(3): positives(i) supplies the index set inside
// the log. The live embedding z replaces bank row i, so the self term in
// the denominator is exp(z.z/tau) with gradient 2z/tau.
template <typename PositiveFn>
SimilarityLoss positive_set_loss(const MemoryBank& bank,
                                 const std::vector<int>& batch,
                                 const Eigen::MatrixXd& live,
                                 PositiveFn positives) {
  const int n = bank.size();
  if (live.rows() != static_cast<Eigen::Index>(batch.size()) ||
      live.cols() != bank.dim())
    throw InvalidInput("live embedding matrix shape mismatch");
  SimilarityLoss out;
  out.grad = Eigen::MatrixXd::Zero(batch.size(), bank.dim());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    int i = batch[b];
    if (i < 0 || i >= n) throw InvalidInput("sample id out of range");
    const std::vector<int>& pos = positives(i);
    if (pos.empty())
      throw MissingNeighbors("sample " + std::to_string(i) +
                             " has an empty positive set");
    Eigen::VectorXd z = live.row(b).transpose();
    Eigen::VectorXd s = bank.vectors * z / bank.tau;
    s(i) = z.dot(z) / bank.tau;
    double m = s.maxCoeff();
    Eigen::VectorXd e = (s.array() - m).exp();
    if (!bank.include_self) e(i) = 0.0;
    double denom = e.sum();

    double num = 0.0;
    for (int j : pos) {
      if (j == i)
        throw InvalidInput("positive set of " + std::to_string(i) +
                           " contains the sample itself");
      num += e(j);
    }
    out.loss += std::log(denom) - std::log(num);

    // d loss / dz = sum_k (e_k/denom) g_k - sum_{j in pos} (e_j/num) g_j
    // with g_k = z_k/tau for k != i and g_i = 2z/tau.
    Eigen::VectorXd w = e / denom;
    for (int j : pos) w(j) -= e(j) / num;
    double wi = w(i);
    w(i) = 0.0;
    Eigen::VectorXd g = bank.vectors.transpose() * w / bank.tau;
    if (bank.include_self) g += wi * 2.0 * z / bank.tau;
    out.grad.row(b) = g.transpose();
  }
  return out;
}

}  // namespace

SimilarityLoss divide_loss(const MemoryBank& bank,
                           const NeighborSets& neighbors,
                           const std::vector<int>& batch,
                           const Eigen::MatrixXd& live) {
  if (neighbors.spatial.size() != static_cast<std::size_t>(bank.size()))
    throw InvalidInput("spatial neighbor sets do not cover the bank");
  return positive_set_loss(
      bank, batch, live,
      [&](int i) -> const std::vector<int>& { return neighbors.spatial[i]; });
}

SimilarityLoss rule_loss(const MemoryBank& bank, const NeighborSets& neighbors,
                         const std::vector<int>& batch,
                         const Eigen::MatrixXd& live) {
  if (neighbors.spatial.size() != static_cast<std::size_t>(bank.size()) ||
      neighbors.feature.size() != static_cast<std::size_t>(bank.size()))
    throw InvalidInput("neighbor sets do not cover the bank");
  std::vector<int> merged;
  return positive_set_loss(bank, batch, live,
                           [&](int i) -> const std::vector<int>& {
                             merged = neighbors.spatial[i];
                             merged.insert(merged.end(),
                                           neighbors.feature[i].begin(),
                                           neighbors.feature[i].end());
                             std::sort(merged.begin(), merged.end());
                             merged.erase(
                                 std::unique(merged.begin(), merged.end()),
                                 merged.end());
                             return merged;
                           });
}

double compute_entropy(const MemoryBank& bank, int i, bool self_excluded) {
  Eigen::VectorXd p = similarity_probs(bank, i);
  if (self_excluded) {
    p(i) = 0.0;
    p /= p.sum();
  }
  double h = 0.0;
  for (Eigen::Index j = 0; j < p.size(); ++j)
    if (p(j) > 0.0) h -= p(j) * std::log(p(j));
  return h;
}

EntropyPartition schedule_partition(const std::vector<double>& entropies,
                                    int round, int total_rounds) {
  if (total_rounds < 1 || round < 1 || round > total_rounds)
    throw InvalidInput("round must be in [1, total_rounds]");
  const int n = static_cast<int>(entropies.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (entropies[a] != entropies[b]) return entropies[a] < entropies[b];
    return a < b;
  });
  int take = static_cast<int>(
      static_cast<long long>(n) * round / total_rounds);
  EntropyPartition part;
  part.entropies = entropies;
  part.round = round;
  part.total_rounds = total_rounds;
  part.expansion_set.assign(order.begin(), order.begin() + take);
  part.instance_set.assign(order.begin() + take, order.end());
  std::sort(part.expansion_set.begin(), part.expansion_set.end());
  std::sort(part.instance_set.begin(), part.instance_set.end());
  return part;
}

}  // namespace dnr
