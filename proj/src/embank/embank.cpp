#include "embank/embank.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace dnr {

MemoryBank init_bank(int n, int d, std::uint64_t seed, double momentum,
                     double tau) {
  if (n < 2 || d < 2) throw InvalidInput("memory bank needs N >= 2, d >= 2");
  MemoryBank bank;
  bank.momentum = momentum;
  bank.tau = tau;
  bank.vectors.resize(n, d);
  Rng rng = Rng::derive(seed, 0);
  for (int i = 0; i < n; ++i)
    bank.vectors.row(i) = rng.unit_vector(d).transpose();
  return bank;
}

void validate_bank(const MemoryBank& bank) {
  if (bank.size() < 2 || bank.dim() < 2)
    throw InvalidInput("memory bank needs N >= 2, d >= 2");
  if (!(bank.tau > 0.0 && bank.tau <= 1.0))
    throw InvalidInput("temperature must be in (0,1]");
  if (!(bank.momentum >= 0.0 && bank.momentum < 1.0))
    throw InvalidInput("momentum must be in [0,1)");
  for (int i = 0; i < bank.size(); ++i)
    if (std::abs(bank.vectors.row(i).norm() - 1.0) > 1e-6)
      throw InvalidInput("bank row " + std::to_string(i) + " is not unit norm");
}

Eigen::VectorXd similarity_probs(const MemoryBank& bank, int i) {
  if (i < 0 || i >= bank.size()) throw InvalidInput("sample id out of range");
  Eigen::VectorXd s = bank.vectors * bank.vectors.row(i).transpose() / bank.tau;
  if (!bank.include_self) s(i) = -std::numeric_limits<double>::infinity();
  double m = s.maxCoeff();
  Eigen::VectorXd p = (s.array() - m).exp();
  if (!bank.include_self) p(i) = 0.0;
  return p / p.sum();
}

bool update(MemoryBank& bank, int i, const Eigen::VectorXd& z_new) {
  if (i < 0 || i >= bank.size()) throw InvalidInput("sample id out of range");
  if (z_new.size() != bank.dim()) throw InvalidInput("embedding dim mismatch");
  if (std::abs(z_new.norm() - 1.0) > 1e-6)
    throw InvalidInput("bank update requires a unit vector");
  Eigen::VectorXd blended = bank.momentum * bank.vectors.row(i).transpose() +
                            (1.0 - bank.momentum) * z_new;
  double n = blended.norm();
  if (n < 1e-12) return false;
  bank.vectors.row(i) = blended.transpose() / n;
  return true;
}

std::vector<int> top_k_neighbors(const MemoryBank& bank, int i, int k) {
  const int n = bank.size();
  if (i < 0 || i >= n) throw InvalidInput("sample id out of range");
  if (k < 1 || k >= n)
    throw InvalidInput("k must be in [1, N-1], got " + std::to_string(k));
  Eigen::VectorXd sims = bank.vectors * bank.vectors.row(i).transpose();
  std::vector<int> ids;
  ids.reserve(n - 1);
  for (int j = 0; j < n; ++j)
    if (j != i) ids.push_back(j);
  auto better = [&](int a, int b) {
    if (sims(a) != sims(b)) return sims(a) > sims(b);
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), better);
  ids.resize(k);
  return ids;
}

void refresh_feature_neighbors(NeighborSets& neighbors,
                               const MemoryBank& bank, int k) {
  neighbors.feature.resize(bank.size());
  for (int i = 0; i < bank.size(); ++i)
    neighbors.feature[i] = top_k_neighbors(bank, i, k);
}

std::vector<std::vector<int>> build_spatial_neighbors(
    const std::vector<GridPos>& positions, int connectivity) {
  if (connectivity != 4 && connectivity != 8)
    throw InvalidInput("connectivity must be 4 or 8");
  std::map<std::tuple<int, int, int>, int> by_cell;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    auto key = std::make_tuple(positions[i].slide, positions[i].row,
                               positions[i].col);
    if (!by_cell.emplace(key, static_cast<int>(i)).second)
      throw InvalidInput("duplicate grid cell in patch metadata");
  }
  std::vector<std::vector<int>> out(positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        if (dr == 0 && dc == 0) continue;
        if (connectivity == 4 && dr != 0 && dc != 0) continue;
        auto it = by_cell.find(std::make_tuple(positions[i].slide,
                                               positions[i].row + dr,
                                               positions[i].col + dc));
        if (it != by_cell.end()) out[i].push_back(it->second);
      }
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

}  // namespace dnr
