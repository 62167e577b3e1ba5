#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <fstream>

#include "dtlns/backbone.hpp"
#include "dtlns/train.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace dtlns;
using backbone::Kind;
using backbone::Triple;
using dataset::Interaction;
using dataset::InteractionDataset;

InteractionDataset toy_dataset(std::size_t users, std::size_t items, std::uint64_t seed) {
  Rng rng(seed);
  InteractionDataset ds;
  ds.user_count = users;
  ds.item_count = items;
  for (UserId u = 0; u < users; ++u) {
    ds.train.push_back({u, static_cast<ItemId>(u % items), {}});
    for (ItemId i = 0; i < items; ++i) {
      if (i != u % items && uniform_unit(rng) < 0.3) ds.train.push_back({u, i, {}});
    }
  }
  // Every item needs a neighbour for the normalization to be defined.
  for (ItemId i = 0; i < items; ++i) ds.train.push_back({static_cast<UserId>(i % users), i, {}});
  std::sort(ds.train.begin(), ds.train.end(), dataset::PairLess{});
  ds.train.erase(std::unique(ds.train.begin(), ds.train.end()), ds.train.end());
  ds.reindex();
  return ds;
}

std::vector<Triple> random_batch(const InteractionDataset& ds, std::size_t n, bool mix, Rng& rng) {
  std::vector<Triple> batch;
  while (batch.size() < n) {
    const auto& e = ds.train[uniform_index(rng, ds.train.size())];
    const auto neg = static_cast<ItemId>(uniform_index(rng, ds.item_count));
    if (ds.is_train_positive(e.user, neg)) continue;
    batch.push_back({e.user, e.item, neg, mix ? uniform_unit(rng) : 0.0});
  }
  return batch;
}

void check_gradients(Kind kind, std::size_t layers) {
  const auto ds = toy_dataset(10, 10, 7);
  const auto graph = backbone::build_graph(ds);
  auto state = backbone::init_params(10, 10, 4, kind, layers, 3);
  Rng rng(11);
  const auto batch = random_batch(ds, 12, true, rng);
  const double l2 = 1e-2;

  backbone::Gradients grad;
  backbone::bpr_loss(state, graph, batch, l2, &grad);

  const double h = 1e-5;
  auto check = [&](Matrix& table, const Matrix& analytic) {
    for (std::size_t r = 0; r < table.rows(); ++r) {
      for (std::size_t c = 0; c < table.cols(); ++c) {
        const double keep = table(r, c);
        table(r, c) = keep + h;
        const double up = backbone::bpr_loss(state, graph, batch, l2, nullptr);
        table(r, c) = keep - h;
        const double down = backbone::bpr_loss(state, graph, batch, l2, nullptr);
        table(r, c) = keep;
        const double numeric = (up - down) / (2 * h);
        const double a = analytic(r, c);
        const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
        EXPECT_LE(rel, 1e-4) << "entry (" << r << "," << c << ") analytic " << a << " numeric " << numeric;
      }
    }
  };
  check(state.user_emb, grad.user);
  check(state.item_emb, grad.item);
}

TEST(Gradient, MatrixFactorization) { check_gradients(Kind::MF, 0); }
TEST(Gradient, LightGcnThreeLayers) { check_gradients(Kind::LightGCN, 3); }

TEST(Init, XavierBoundsAndDeterminism) {
  const auto a = backbone::init_params(100, 300, 64, Kind::LightGCN, 3, 5);
  const auto b = backbone::init_params(100, 300, 64, Kind::LightGCN, 3, 5);
  EXPECT_EQ(a.user_emb, b.user_emb);
  EXPECT_EQ(a.item_emb, b.item_emb);
  EXPECT_EQ(a.dim(), 64u);
  const double ub = std::sqrt(6.0 / 164.0), ib = std::sqrt(6.0 / 364.0);
  double sum = 0.0;
  for (double v : a.user_emb.values()) {
    EXPECT_LE(std::abs(v), ub);
    sum += v;
  }
  for (double v : a.item_emb.values()) EXPECT_LE(std::abs(v), ib);
  // Uniform(-b, b) has sd b / sqrt(3); the mean of n entries has sd b / sqrt(3n).
  const double n = static_cast<double>(a.user_emb.values().size());
  EXPECT_LE(std::abs(sum / n), 3.0 * ub / std::sqrt(3.0 * n));
  EXPECT_THROW(backbone::init_params(1, 1, 0, Kind::MF, 0, 0), PreconditionError);
}

TEST(Propagate, ZeroLayersAndMfAreIdentity) {
  const auto ds = toy_dataset(6, 5, 1);
  const auto graph = backbone::build_graph(ds);
  for (auto [kind, layers] : {std::pair{Kind::LightGCN, std::size_t{0}}, std::pair{Kind::MF, std::size_t{3}}}) {
    const auto s = backbone::init_params(6, 5, 3, kind, layers, 2);
    const auto e = backbone::propagate(s, graph);
    EXPECT_EQ(e.users, s.user_emb);
    EXPECT_EQ(e.items, s.item_emb);
  }
}

TEST(Propagate, SingleEdgeOneLayer) {
  InteractionDataset ds;
  ds.user_count = 1;
  ds.item_count = 1;
  ds.train = {{0, 0, {}}};
  ds.reindex();
  auto s = backbone::init_params(1, 1, 3, Kind::LightGCN, 1, 0);
  s.user_emb.values()[0] = 1.0;
  s.item_emb.values()[0] = 5.0;
  const auto e = backbone::propagate(s, backbone::build_graph(ds));
  // (layer 0 + layer 1) / 2 where layer 1 of the user is the item's layer 0.
  EXPECT_DOUBLE_EQ(e.users(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(e.items(0, 0), 3.0);
}

TEST(Propagate, MatchesDenseOracle) {
  const auto ds = toy_dataset(8, 9, 4);
  const auto s = backbone::init_params(8, 9, 5, Kind::LightGCN, 3, 9);
  const auto e = backbone::propagate(s, backbone::build_graph(ds));

  const std::size_t n = 17;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (const auto& x : ds.train) {
    a(x.user, 8 + x.item) = a(8 + x.item, x.user) = 1.0;
  }
  const Eigen::VectorXd deg = a.rowwise().sum();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (a(i, j) != 0.0) a(i, j) /= std::sqrt(deg(i) * deg(j));
    }
  }
  Eigen::MatrixXd x(n, 5);
  for (std::size_t r = 0; r < 8; ++r) for (std::size_t c = 0; c < 5; ++c) x(r, c) = s.user_emb(r, c);
  for (std::size_t r = 0; r < 9; ++r) for (std::size_t c = 0; c < 5; ++c) x(8 + r, c) = s.item_emb(r, c);
  Eigen::MatrixXd acc = x, cur = x;
  for (int l = 0; l < 3; ++l) {
    cur = a * cur;
    acc += cur;
  }
  acc /= 4.0;
  for (std::size_t r = 0; r < 8; ++r) for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(e.users(r, c), acc(r, c), 1e-12);
  for (std::size_t r = 0; r < 9; ++r) for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(e.items(r, c), acc(8 + r, c), 1e-12);
}

TEST(Propagate, Linear) {
  const auto ds = toy_dataset(7, 6, 2);
  const auto graph = backbone::build_graph(ds);
  auto s = backbone::init_params(7, 6, 4, Kind::LightGCN, 3, 1);
  const auto base = backbone::propagate(s, graph);
  for (auto& v : s.user_emb.values()) v *= -2.5;
  for (auto& v : s.item_emb.values()) v *= -2.5;
  const auto scaled = backbone::propagate(s, graph);
  for (std::size_t k = 0; k < base.users.values().size(); ++k) {
    EXPECT_NEAR(scaled.users.values()[k], -2.5 * base.users.values()[k], 1e-10);
  }
}

TEST(Score, DotProduct) {
  backbone::Embeddings e{Matrix(1, 64), Matrix(1, 64)};
  Rng rng(3);
  double oracle = 0.0;
  for (std::size_t k = 0; k < 64; ++k) {
    e.users(0, k) = uniform_unit(rng);
    e.items(0, k) = uniform_unit(rng);
    oracle += e.users(0, k) * e.items(0, k);
  }
  EXPECT_NEAR(backbone::score(e, 0, 0), oracle, 1e-12);
}

TEST(Loss, PairLossValues) {
  EXPECT_NEAR(backbone::pair_loss(0.0), std::log(2.0), 1e-15);
  EXPECT_LT(backbone::pair_loss(20.0), 1e-8);
  EXPECT_NEAR(backbone::pair_loss(-800.0), 800.0, 1e-9);  // no overflow
  for (double x = -10.0; x < 10.0; x += 0.5) EXPECT_GT(backbone::pair_loss(x), backbone::pair_loss(x + 0.5));
}

TEST(Loss, EqualScoresGiveLn2) {
  InteractionDataset ds;
  ds.user_count = 1;
  ds.item_count = 2;
  ds.train = {{0, 0, {}}};
  ds.reindex();
  auto s = backbone::init_params(1, 2, 2, Kind::MF, 0, 0);
  s.item_emb.row(0)[0] = s.item_emb.row(1)[0] = 0.3;
  s.item_emb.row(0)[1] = s.item_emb.row(1)[1] = -0.1;
  const std::vector<Triple> batch{{0, 0, 1, 0.0}};
  EXPECT_NEAR(backbone::bpr_loss(s, backbone::build_graph(ds), batch, 0.0, nullptr), std::log(2.0), 1e-15);
  EXPECT_THROW(backbone::bpr_loss(s, backbone::build_graph(ds), {}, 0.0, nullptr), PreconditionError);
}

TEST(Step, NonFiniteLossThrows) {
  const auto ds = toy_dataset(3, 3, 0);
  auto s = backbone::init_params(3, 3, 2, Kind::MF, 0, 0);
  s.user_emb(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<Triple> batch{{0, ds.user_pos[0][0], 2, 0.0}};
  EXPECT_THROW(backbone::bpr_step(s, backbone::build_graph(ds), batch, {}), NumericError);
}

TEST(Step, LossTrajectoryIsBitStable) {
  const auto ds = toy_dataset(10, 12, 5);
  auto run = [&] {
    const auto graph = backbone::build_graph(ds);
    auto s = backbone::init_params(10, 12, 8, Kind::LightGCN, 3, 4);
    Rng rng(8);
    std::vector<double> losses;
    for (int t = 0; t < 20; ++t) {
      const auto batch = random_batch(ds, 16, true, rng);
      losses.push_back(backbone::bpr_step(s, graph, batch, {}));
    }
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTrip) {
  dtlns::testing::TempDir dir;
  auto s = backbone::init_params(4, 6, 3, Kind::LightGCN, 2, 1);
  s.adam.step = 17;
  backbone::save_checkpoint(dir / "m.bin", s);
  const auto back = backbone::load_checkpoint(dir / "m.bin");
  EXPECT_EQ(back.kind, s.kind);
  EXPECT_EQ(back.layers, 2u);
  EXPECT_EQ(back.adam.step, 17u);
  EXPECT_EQ(back.user_emb, s.user_emb);
  EXPECT_EQ(back.item_emb, s.item_emb);
  {
    std::ofstream bad(dir / "bad.bin", std::ios::binary);
    bad << "nope";
  }
  EXPECT_THROW(backbone::load_checkpoint(dir / "bad.bin"), Error);
}

TEST(Pretrain, ZeroEpochsReturnsPropagatedInit) {
  const auto ds = toy_dataset(10, 8, 6);
  backbone::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 12;
  const auto r = train::pretrain_semantic(ds, Kind::LightGCN, 3, 64, cfg);
  EXPECT_EQ(r.item_embeddings.rows(), 8u);
  EXPECT_EQ(r.item_embeddings.cols(), 64u);
  const auto init = backbone::init_params(10, 8, 64, Kind::LightGCN, 3, 12);
  EXPECT_EQ(r.item_embeddings, backbone::propagate(init, backbone::build_graph(ds)).items);
}

TEST(Pretrain, SeparatesPlantedBlocks) {
  dtlns::testing::TwoBlockSpec spec;
  spec.users = 80;
  spec.items = 80;
  spec.clusters_per_block = 4;
  const auto edges = dtlns::testing::two_block_interactions(spec, 3);
  const auto ds = dataset::split(edges, spec.users, spec.items, {}, 1);
  backbone::TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 256;
  cfg.lr = 0.01;
  cfg.patience = 0;
  const auto r = train::pretrain_semantic(ds, Kind::LightGCN, 3, 32, cfg);
  const auto& e = r.item_embeddings;
  auto cosine = [&](std::size_t a, std::size_t b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t k = 0; k < e.cols(); ++k) {
      ab += e(a, k) * e(b, k);
      aa += e(a, k) * e(a, k);
      bb += e(b, k) * e(b, k);
    }
    return ab / std::sqrt(aa * bb);
  };
  double within = 0, cross = 0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t a = 0; a < spec.items; ++a) {
    for (std::size_t b = a + 1; b < spec.items; ++b) {
      const bool same = (a < spec.items / 2) == (b < spec.items / 2);
      (same ? within : cross) += cosine(a, b);
      ++(same ? nw : nc);
    }
  }
  EXPECT_GT(within / nw, cross / nc);
}

}  // namespace
