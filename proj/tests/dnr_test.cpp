#include <cmath>
#include <numeric>

#include "doctest.h"

#include <Eigen/Dense>

#include "core/errors.hpp"
#include "core/rng.hpp"
#include "dnr/objective.hpp"
#include "dnr/train.hpp"

using namespace dnr;

namespace {

LinearCodec random_codec(int d, int d_in, int d_out, std::uint64_t seed) {
  LinearCodec c;
  c.phi.resize(d, d_in);
  c.psi.resize(d_out, d);
  Rng rng = Rng::derive(seed, 0);
  for (int r = 0; r < d; ++r)
    for (int col = 0; col < d_in; ++col) c.phi(r, col) = 0.3 * rng.normal();
  for (int r = 0; r < d_out; ++r)
    for (int col = 0; col < d; ++col) c.psi(r, col) = 0.3 * rng.normal();
  return c;
}

MemoryBank rows_bank(const std::vector<Eigen::VectorXd>& rows, double tau) {
  MemoryBank b;
  b.tau = tau;
  b.vectors.resize(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    b.vectors.row(i) = rows[i].normalized().transpose();
  return b;
}

Eigen::VectorXd basis(int d, int i) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(d);
  v(i) = 1.0;
  return v;
}

double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({std::abs(got), std::abs(want), 1e-8});
}

// Central finite differences over every entry of a parameter matrix.
template <typename LossFn>
void check_matrix_gradient(Eigen::MatrixXd& param,
                           const Eigen::MatrixXd& analytic, LossFn loss,
                           double tol) {
  const double h = 1e-6;
  for (Eigen::Index r = 0; r < param.rows(); ++r)
    for (Eigen::Index c = 0; c < param.cols(); ++c) {
      double keep = param(r, c);
      param(r, c) = keep + h;
      double up = loss();
      param(r, c) = keep - h;
      double down = loss();
      param(r, c) = keep;
      double fd = (up - down) / (2.0 * h);
      if (std::abs(fd) < 1e-10 && std::abs(analytic(r, c)) < 1e-10) continue;
      CHECK(rel_err(analytic(r, c), fd) < tol);
    }
}

}  // namespace

TEST_CASE("mse_loss on identity and zero codecs") {
  LinearCodec ident;
  ident.phi = Eigen::MatrixXd::Identity(3, 3);
  ident.psi = Eigen::MatrixXd::Identity(3, 3);
  Eigen::VectorXd x(3);
  x << 0.2, -0.4, 0.9;
  MseResult r = mse_loss(ident, x, x);
  CHECK(r.loss == doctest::Approx(0.0));
  CHECK(r.grad_phi.cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  CHECK(r.grad_psi.cwiseAbs().maxCoeff() == doctest::Approx(0.0));

  LinearCodec zero;
  zero.phi = Eigen::MatrixXd::Zero(2, 3);
  zero.psi = Eigen::MatrixXd::Zero(3, 2);
  MseResult z = mse_loss(zero, x, x);
  CHECK(z.loss == doctest::Approx(x.squaredNorm() / 3.0).epsilon(1e-14));
}

TEST_CASE("mse_loss rejects dimension mismatches") {
  LinearCodec c = random_codec(2, 3, 3, 1);
  Eigen::VectorXd x(3), bad(4);
  x.setZero();
  bad.setZero();
  CHECK_THROWS_AS(mse_loss(c, bad, x), InvalidInput);
  CHECK_THROWS_AS(mse_loss(c, x, bad), InvalidInput);
}

TEST_CASE("mse_loss gradients match finite differences") {
  Rng rng = Rng::derive(2024, 0);
  for (int inst = 0; inst < 5; ++inst) {
    LinearCodec c = random_codec(3, 5, 4, 100 + inst);
    Eigen::VectorXd in(5), target(4);
    for (int i = 0; i < 5; ++i) in(i) = rng.normal();
    for (int i = 0; i < 4; ++i) target(i) = rng.normal();
    MseResult r = mse_loss(c, in, target);
    auto eval = [&]() { return mse_loss(c, in, target).loss; };
    check_matrix_gradient(c.phi, r.grad_phi, eval, 1e-5);
    check_matrix_gradient(c.psi, r.grad_psi, eval, 1e-5);
  }
}

TEST_CASE("divide_loss closed forms on a small bank") {
  // Bank: sample 0 and its duplicate plus two orthogonal negatives.
  std::vector<Eigen::VectorXd> rows = {basis(3, 0), basis(3, 0), basis(3, 1),
                                       basis(3, 2)};
  NeighborSets nb;
  nb.spatial = {{1}, {0}, {}, {}};
  Eigen::MatrixXd live = rows[0].transpose();

  MemoryBank literal = rows_bank(rows, 1.0);
  SimilarityLoss l = divide_loss(literal, nb, {0}, live);
  // -log(e / (2e + 2)) with the self term in the denominator.
  double e = std::exp(1.0);
  CHECK(l.loss == doctest::Approx(std::log(2 * e + 2) - 1.0).epsilon(1e-12));

  MemoryBank excl = rows_bank(rows, 1.0);
  excl.include_self = false;
  SimilarityLoss lx = divide_loss(excl, nb, {0}, live);
  // -log(e / (e + 1 + 1)) = 0.5514...
  CHECK(lx.loss == doctest::Approx(0.5514447139320509).epsilon(1e-12));
}

TEST_CASE("divide_loss with S_i covering all other samples") {
  MemoryBank b = init_bank(4, 3, 77, 0.5, 0.7);
  NeighborSets nb;
  nb.spatial = {{1, 2, 3}, {0}, {0}, {0}};
  Eigen::MatrixXd live = b.vectors.row(0);
  SimilarityLoss l = divide_loss(b, nb, {0}, live);

  // Direct evaluation of Eq. (2).
  double denom = 0.0, num = 0.0;
  for (int k = 0; k < 4; ++k) {
    double term = std::exp(b.vectors.row(k).dot(b.vectors.row(0)) / b.tau);
    denom += term;
    if (k != 0) num += term;
  }
  CHECK(l.loss == doctest::Approx(-std::log(num / denom)).epsilon(1e-12));
  CHECK(l.loss > 0.0);
}

TEST_CASE("divide_loss requires non-empty positive sets") {
  MemoryBank b = init_bank(3, 3, 1);
  NeighborSets nb;
  nb.spatial = {{}, {0}, {0}};
  Eigen::MatrixXd live = b.vectors.row(0);
  CHECK_THROWS_AS(divide_loss(b, nb, {0}, live), MissingNeighbors);
}

TEST_CASE("similarity loss gradients match finite differences") {
  const double h = 1e-6;
  for (int inst = 0; inst < 6; ++inst) {
    MemoryBank b = init_bank(8, 4, 500 + inst, 0.5, inst % 2 ? 0.5 : 1.0);
    if (inst == 5) b.include_self = false;
    NeighborSets nb;
    nb.spatial.resize(8);
    Rng rng = Rng::derive(900 + inst, 0);
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        if (i != j && rng.uniform() < 0.4) nb.spatial[i].push_back(j);
    for (int i = 0; i < 8; ++i)
      if (nb.spatial[i].empty()) nb.spatial[i].push_back((i + 1) % 8);
    refresh_feature_neighbors(nb, b, 3);

    std::vector<int> batch = {1, 4, 6};
    Eigen::MatrixXd live(3, 4);
    for (int r = 0; r < 3; ++r) live.row(r) = rng.unit_vector(4).transpose();

    for (int use_rule = 0; use_rule < 2; ++use_rule) {
      auto eval = [&](const Eigen::MatrixXd& lv) {
        return use_rule ? rule_loss(b, nb, batch, lv).loss
                        : divide_loss(b, nb, batch, lv).loss;
      };
      SimilarityLoss l = use_rule ? rule_loss(b, nb, batch, live)
                                  : divide_loss(b, nb, batch, live);
      CHECK(l.loss >= 0.0);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) {
          Eigen::MatrixXd up = live, down = live;
          up(r, c) += h;
          down(r, c) -= h;
          double fd = (eval(up) - eval(down)) / (2.0 * h);
          // Central differences bottom out near eps*|loss|/h ~ 1e-9.
          if (std::abs(fd) < 1e-8 && std::abs(l.grad(r, c)) < 1e-8) continue;
          CHECK(rel_err(l.grad(r, c), fd) < 1e-5);
        }
    }
  }
}

TEST_CASE("rule_loss equals divide_loss when N_i is inside S_i") {
  MemoryBank b = init_bank(6, 3, 11);
  NeighborSets nb;
  nb.spatial.resize(6);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j)
      if (i != j) nb.spatial[i].push_back(j);
  refresh_feature_neighbors(nb, b, 2);  // subset of the full spatial sets

  std::vector<int> batch = {0, 2, 5};
  Eigen::MatrixXd live(3, 3);
  for (int r = 0; r < 3; ++r) live.row(r) = b.vectors.row(batch[r]);
  double d = divide_loss(b, nb, batch, live).loss;
  double r = rule_loss(b, nb, batch, live).loss;
  CHECK(r == doctest::Approx(d).epsilon(1e-14));
}

TEST_CASE("enlarging N_i never increases rule_loss") {
  for (std::uint64_t seed : {21u, 22u, 23u}) {
    MemoryBank b = init_bank(10, 4, seed);
    NeighborSets nb;
    nb.spatial.assign(10, {});
    for (int i = 0; i < 10; ++i) nb.spatial[i].push_back((i + 1) % 10);
    std::vector<int> batch = {0, 3, 7};
    Eigen::MatrixXd live(3, 4);
    for (int r = 0; r < 3; ++r) live.row(r) = b.vectors.row(batch[r]);

    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 8; ++k) {
      refresh_feature_neighbors(nb, b, k);
      double cur = rule_loss(b, nb, batch, live).loss;
      CHECK(cur <= prev + 1e-12);
      prev = cur;
    }
  }
}

TEST_CASE("compute_entropy limits") {
  // All other vectors identical to z_i: uniform over N-1.
  std::vector<Eigen::VectorXd> same = {basis(3, 0), basis(3, 0), basis(3, 0),
                                       basis(3, 0)};
  MemoryBank b = rows_bank(same, 0.5);
  CHECK(compute_entropy(b, 0) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // One exact duplicate, everything else orthogonal, tiny temperature.
  std::vector<Eigen::VectorXd> peaky = {basis(3, 0), basis(3, 0), basis(3, 1),
                                        basis(3, 2)};
  MemoryBank sharp = rows_bank(peaky, 0.03);
  CHECK(compute_entropy(sharp, 0) < 1e-8);
}

TEST_CASE("compute_entropy matches direct summation") {
  MemoryBank b = init_bank(12, 5, 31, 0.5, 0.6);
  for (int i = 0; i < 12; ++i) {
    Eigen::VectorXd p = similarity_probs(b, i);
    double z = 0.0;
    for (int j = 0; j < 12; ++j)
      if (j != i) z += p(j);
    double want = 0.0;
    for (int j = 0; j < 12; ++j)
      if (j != i && p(j) > 0) want -= (p(j) / z) * std::log(p(j) / z);
    CHECK(rel_err(compute_entropy(b, i), want) < 1e-10);

    double full = 0.0;
    for (int j = 0; j < 12; ++j)
      if (p(j) > 0) full -= p(j) * std::log(p(j));
    CHECK(rel_err(compute_entropy(b, i, false), full) < 1e-10);
  }
}

TEST_CASE("schedule_partition fractions, ties, and nesting") {
  std::vector<double> h = {0.9, 0.1, 0.5, 0.3, 0.8, 0.2, 0.7, 0.4, 0.6};
  EntropyPartition p1 = schedule_partition(h, 1, 3);
  CHECK(p1.expansion_set == std::vector<int>{1, 3, 5});
  CHECK(p1.instance_set.size() == 6);

  EntropyPartition p3 = schedule_partition(h, 3, 3);
  CHECK(p3.expansion_set.size() == 9);
  CHECK(p3.instance_set.empty());

  std::vector<double> equal(7, 1.0);
  EntropyPartition tie = schedule_partition(equal, 2, 7);
  CHECK(tie.expansion_set == std::vector<int>{0, 1});

  SUBCASE("nesting and threshold property on random entropies") {
    Rng rng = Rng::derive(64, 0);
    std::vector<double> rand_h(20);
    for (auto& v : rand_h) v = rng.uniform();
    std::vector<int> prev;
    for (int r = 1; r <= 5; ++r) {
      EntropyPartition p = schedule_partition(rand_h, r, 5);
      CHECK(p.expansion_set.size() + p.instance_set.size() == 20);
      for (int id : prev)
        CHECK(std::find(p.expansion_set.begin(), p.expansion_set.end(), id) !=
              p.expansion_set.end());
      double max_exp = -1.0;
      for (int id : p.expansion_set) max_exp = std::max(max_exp, rand_h[id]);
      for (int id : p.instance_set) CHECK(rand_h[id] >= max_exp);
      prev = p.expansion_set;
    }
  }

  CHECK_THROWS_AS(schedule_partition(h, 0, 3), InvalidInput);
  CHECK_THROWS_AS(schedule_partition(h, 4, 3), InvalidInput);
}

namespace {

struct BlobData {
  Eigen::MatrixXd features;
  std::vector<std::vector<int>> spatial;
};

// Two spatially contiguous blobs on a single-slide grid with distinct
// feature prototypes.
BlobData two_blob_data(int rows, int cols, int d, double noise,
                       std::uint64_t seed) {
  BlobData out;
  std::vector<GridPos> pos;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) pos.push_back({0, r, c});
  out.spatial = build_spatial_neighbors(pos, 4);

  Rng rng = Rng::derive(seed, 0);
  Eigen::VectorXd proto_a(d), proto_b(d);
  for (int i = 0; i < d; ++i) {
    proto_a(i) = rng.normal();
    proto_b(i) = rng.normal();
  }
  out.features.resize(pos.size(), d);
  for (std::size_t i = 0; i < pos.size(); ++i) {
    const Eigen::VectorXd& proto = pos[i].col < cols / 2 ? proto_a : proto_b;
    for (int j = 0; j < d; ++j)
      out.features(static_cast<Eigen::Index>(i), j) =
          proto(j) + noise * rng.normal();
  }
  return out;
}

}  // namespace

TEST_CASE("train is deterministic and bookkeeping is exact") {
  BlobData data = two_blob_data(4, 6, 5, 0.2, 9);
  TrainConfig cfg;
  cfg.latent_dim = 4;
  cfg.epochs_per_phase = 3;
  cfg.rounds = 2;
  cfg.lambda = 0.05;
  cfg.learning_rate = 0.05;
  cfg.batch_size = 8;
  cfg.k_neighbors = 3;
  cfg.seed = 11;

  TrainResult a = train(data.features, data.features, data.spatial, cfg);
  TrainResult b = train(data.features, data.features, data.spatial, cfg);
  CHECK(a.codec.phi == b.codec.phi);
  CHECK(a.codec.psi == b.codec.psi);
  CHECK(a.bank.vectors == b.bank.vectors);

  CHECK(a.trace.size() == static_cast<std::size_t>((2 + cfg.rounds) *
                                                   cfg.epochs_per_phase));
  for (const auto& rep : a.trace) {
    double want = rep.mse + cfg.lambda * (rep.divide + rep.rule);
    CHECK(rel_err(rep.total, want) < 1e-12);
  }
  CHECK(a.partitions.size() == 2);
  for (int id : a.partitions[0].expansion_set)
    CHECK(std::find(a.partitions[1].expansion_set.begin(),
                    a.partitions[1].expansion_set.end(),
                    id) != a.partitions[1].expansion_set.end());
}

TEST_CASE("lambda zero reduces to the mse-only schedule bitwise") {
  BlobData data = two_blob_data(4, 5, 4, 0.3, 17);
  TrainConfig cfg;
  cfg.latent_dim = 3;
  cfg.epochs_per_phase = 2;
  cfg.rounds = 2;
  cfg.lambda = 0.0;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 7;
  cfg.k_neighbors = 2;
  cfg.seed = 23;

  TrainResult with_machinery = train(data.features, data.features,
                                     data.spatial, cfg);
  TrainConfig plain = cfg;
  plain.mse_only = true;
  TrainResult mse_run = train(data.features, data.features, data.spatial,
                              plain);
  CHECK(with_machinery.codec.phi == mse_run.codec.phi);
  CHECK(with_machinery.codec.psi == mse_run.codec.psi);
  CHECK(with_machinery.bank.vectors == mse_run.bank.vectors);
  // The machinery still reports the (unweighted) similarity losses.
  CHECK(with_machinery.trace.back().total ==
        doctest::Approx(with_machinery.trace.back().mse));
}

TEST_CASE("training tightens within-neighborhood similarity on two blobs") {
  BlobData data = two_blob_data(6, 8, 6, 0.25, 41);
  TrainConfig cfg;
  cfg.latent_dim = 4;
  cfg.epochs_per_phase = 8;
  cfg.rounds = 3;
  cfg.lambda = 0.05;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 16;
  cfg.k_neighbors = 4;
  cfg.seed = 7;

  TrainResult res = train(data.features, data.features, data.spatial, cfg);
  double end_a = res.trace[cfg.epochs_per_phase - 1].within_s_cosine;
  double end_c = res.trace.back().within_s_cosine;
  CHECK(end_c > end_a);
}

TEST_CASE("divergence is reported with the epoch index") {
  BlobData data = two_blob_data(3, 4, 4, 0.2, 5);
  TrainConfig cfg;
  cfg.latent_dim = 3;
  cfg.epochs_per_phase = 4;
  cfg.rounds = 1;
  cfg.learning_rate = 1e9;
  cfg.batch_size = 4;
  cfg.k_neighbors = 2;
  cfg.seed = 3;
  CHECK_THROWS_AS(train(data.features, data.features, data.spatial, cfg),
                  DivergedTraining);
}
