#include "dnr/train.hpp"

#include <cmath>
#include <numeric>

#include "core/errors.hpp"
#include "core/rng.hpp"

namespace dnr {

namespace {

LinearCodec init_codec(int latent_dim, int d_in, int d_out,
                       std::uint64_t seed) {
  LinearCodec codec;
  codec.phi.resize(latent_dim, d_in);
  codec.psi.resize(d_out, latent_dim);
  Rng phi_rng = Rng::derive(seed, 1);
  double phi_scale = 1.0 / std::sqrt(static_cast<double>(d_in));
  for (int r = 0; r < latent_dim; ++r)
    for (int c = 0; c < d_in; ++c)
      codec.phi(r, c) = phi_rng.normal() * phi_scale;
  Rng psi_rng = Rng::derive(seed, 2);
  double psi_scale = 1.0 / std::sqrt(static_cast<double>(latent_dim));
  for (int r = 0; r < d_out; ++r)
    for (int c = 0; c < latent_dim; ++c)
      codec.psi(r, c) = psi_rng.normal() * psi_scale;
  return codec;
}

enum class Role { MseOnly, Divide, Rule };

}  // namespace

double mean_within_s_cosine(const MemoryBank& bank,
                            const std::vector<std::vector<int>>& spatial) {
  double acc = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i < spatial.size(); ++i) {
    if (spatial[i].empty()) continue;
    double s = 0.0;
    for (int j : spatial[i])
      s += bank.vectors.row(static_cast<int>(i)).dot(bank.vectors.row(j));
    acc += s / static_cast<double>(spatial[i].size());
    ++counted;
  }
  if (counted == 0) throw InvalidInput("no sample has spatial neighbors");
  return acc / counted;
}

TrainResult train(const Eigen::MatrixXd& features,
                  const Eigen::MatrixXd& targets,
                  const std::vector<std::vector<int>>& spatial,
                  const TrainConfig& cfg) {
  const int n = static_cast<int>(features.rows());
  const int d_in = static_cast<int>(features.cols());
  const int d_out = static_cast<int>(targets.cols());
  if (targets.rows() != n) throw InvalidInput("features/targets row mismatch");
  if (spatial.size() != static_cast<std::size_t>(n))
    throw InvalidInput("spatial neighbor sets do not cover the dataset");
  if (n < 2) throw InvalidInput("need at least 2 samples");
  if (cfg.epochs_per_phase < 1 || cfg.rounds < 1 || cfg.batch_size < 1 ||
      cfg.latent_dim < 2)
    throw InvalidInput("bad training configuration");
  if (cfg.k_neighbors < 1 || cfg.k_neighbors >= n)
    throw InvalidInput("k_neighbors must be in [1, N-1]");

  TrainResult res;
  res.codec = init_codec(cfg.latent_dim, d_in, d_out, cfg.seed);
  res.bank = init_bank(n, cfg.latent_dim, cfg.seed, cfg.momentum, cfg.tau);
  res.bank.include_self = cfg.include_self;
  res.neighbors.spatial = spatial;
  Rng shuffle_rng = Rng::derive(cfg.seed, 3);

  // lambda = 0 still exercises the whole similarity path (losses reported,
  // gradients scaled to nothing) so an mse_only run must match it bitwise.
  const double lr = cfg.learning_rate;
  const bool sim_active = !cfg.mse_only;
  std::vector<bool> in_expansion(n, false);

  // Phase sequence: one "mse", one "divide", then cfg.rounds "rule" rounds,
  // each cfg.epochs_per_phase epochs long, sharing this epoch body.
  int global_epoch = 0;
  auto run_epoch = [&](const std::string& phase_label, Role base_role) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    double mse_sum = 0.0, divide_sum = 0.0, rule_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int bsz = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd grad_phi =
          Eigen::MatrixXd::Zero(cfg.latent_dim, d_in);
      Eigen::MatrixXd grad_psi = Eigen::MatrixXd::Zero(d_out, cfg.latent_dim);
      Eigen::MatrixXd live(bsz, cfg.latent_dim);
      std::vector<double> latent_norm(bsz, 0.0);
      std::vector<bool> usable(bsz, false);
      std::vector<int> ids(order.begin() + start,
                           order.begin() + start + bsz);

      for (int b = 0; b < bsz; ++b) {
        int i = ids[b];
        MseResult m = mse_loss(res.codec, features.row(i).transpose(),
                               targets.row(i).transpose());
        mse_sum += m.loss;
        grad_phi += m.grad_phi;
        grad_psi += m.grad_psi;
        Eigen::VectorXd y = res.codec.phi * features.row(i).transpose();
        latent_norm[b] = y.norm();
        usable[b] = std::isfinite(latent_norm[b]) && latent_norm[b] > 1e-12;
        if (usable[b])
          live.row(b) = y.transpose() / latent_norm[b];
        else
          live.row(b).setZero();
      }

      if (sim_active && base_role != Role::MseOnly) {
        std::vector<int> div_ids, rule_ids, div_rows, rule_rows;
        for (int b = 0; b < bsz; ++b) {
          if (!usable[b]) continue;
          if (base_role == Role::Rule && in_expansion[ids[b]]) {
            rule_ids.push_back(ids[b]);
            rule_rows.push_back(b);
          } else {
            div_ids.push_back(ids[b]);
            div_rows.push_back(b);
          }
        }
        auto backprop = [&](const std::vector<int>& rows,
                            const SimilarityLoss& sl) {
          for (std::size_t r = 0; r < rows.size(); ++r) {
            int b = rows[r];
            Eigen::VectorXd gz = sl.grad.row(r).transpose();
            Eigen::VectorXd z = live.row(b).transpose();
            Eigen::VectorXd gy = (gz - z * z.dot(gz)) / latent_norm[b];
            grad_phi += cfg.lambda * gy * features.row(ids[b]);
          }
        };
        if (!div_ids.empty()) {
          Eigen::MatrixXd sub(div_ids.size(), cfg.latent_dim);
          for (std::size_t r = 0; r < div_rows.size(); ++r)
            sub.row(r) = live.row(div_rows[r]);
          SimilarityLoss sl = divide_loss(res.bank, res.neighbors, div_ids, sub);
          divide_sum += sl.loss;
          backprop(div_rows, sl);
        }
        if (!rule_ids.empty()) {
          Eigen::MatrixXd sub(rule_ids.size(), cfg.latent_dim);
          for (std::size_t r = 0; r < rule_rows.size(); ++r)
            sub.row(r) = live.row(rule_rows[r]);
          SimilarityLoss sl = rule_loss(res.bank, res.neighbors, rule_ids, sub);
          rule_sum += sl.loss;
          backprop(rule_rows, sl);
        }
      }

      double inv_b = 1.0 / static_cast<double>(bsz);
      res.codec.phi -= lr * inv_b * grad_phi;
      res.codec.psi -= lr * inv_b * grad_psi;

      for (int b = 0; b < bsz; ++b) {
        if (!usable[b] || !update(res.bank, ids[b], live.row(b).transpose()))
          ++res.stalled_updates;
      }
    }

    EpochReport rep;
    rep.epoch = global_epoch++;
    rep.phase = phase_label;
    rep.mse = mse_sum / n;
    rep.divide = divide_sum / n;
    rep.rule = rule_sum / n;
    rep.total = rep.mse + cfg.lambda * (rep.divide + rep.rule);
    rep.within_s_cosine = mean_within_s_cosine(res.bank, spatial);
    if (!std::isfinite(rep.total) || !std::isfinite(rep.mse))
      throw DivergedTraining(rep.epoch);
    res.trace.push_back(rep);
  };

  for (int e = 0; e < cfg.epochs_per_phase; ++e) run_epoch("mse", Role::MseOnly);
  for (int e = 0; e < cfg.epochs_per_phase; ++e)
    run_epoch("divide", cfg.mse_only ? Role::MseOnly : Role::Divide);

  // Frozen entropies keep the per-round expansion sets nested.
  std::vector<double> entropies;
  if (sim_active) {
    entropies.resize(n);
    for (int i = 0; i < n; ++i) entropies[i] = compute_entropy(res.bank, i);
  }
  for (int round = 1; round <= cfg.rounds; ++round) {
    if (sim_active) {
      EntropyPartition part = schedule_partition(entropies, round, cfg.rounds);
      std::fill(in_expansion.begin(), in_expansion.end(), false);
      for (int i : part.expansion_set) in_expansion[i] = true;
      refresh_feature_neighbors(res.neighbors, res.bank, cfg.k_neighbors);
      res.partitions.push_back(std::move(part));
    }
    std::string label = "rule" + std::to_string(round);
    for (int e = 0; e < cfg.epochs_per_phase; ++e)
      run_epoch(label, cfg.mse_only ? Role::MseOnly : Role::Rule);
  }
  return res;
}

}  // namespace dnr
