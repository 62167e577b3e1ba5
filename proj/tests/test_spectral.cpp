#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "dtlns/spectral.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace dtlns;
using dataset::Interaction;

dataset::InteractionDataset from_train(std::size_t users, std::size_t items,
                                       std::vector<Interaction> train) {
  dataset::InteractionDataset ds;
  ds.user_count = users;
  ds.item_count = items;
  ds.train = std::move(train);
  ds.reindex();
  return ds;
}

Eigen::MatrixXd dense(const CsrMatrix& m) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m.dim, m.dim);
  for (std::size_t r = 0; r < m.dim; ++r)
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) a(r, m.col[k]) = m.val[k];
  return a;
}

CsrMatrix from_dense(const Eigen::MatrixXd& a) {
  CsrMatrix m;
  m.dim = static_cast<std::size_t>(a.rows());
  m.row_ptr.assign(1, 0);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (a(r, c) != 0.0) {
        m.col.push_back(static_cast<std::uint32_t>(c));
        m.val.push_back(a(r, c));
      }
    }
    m.row_ptr.push_back(m.col.size());
  }
  return m;
}

// Random connected weighted graph: a spanning path plus random extra edges.
CsrMatrix random_connected(std::size_t n, double p, Rng& rng) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i + 1 < n; ++i) w(i, i + 1) = w(i + 1, i) = 0.05 + uniform_unit(rng);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 2; j < n; ++j)
      if (uniform_unit(rng) < p) w(i, j) = w(j, i) = 0.05 + uniform_unit(rng);
  return from_dense(w);
}

TEST(Jaccard, HandComputedEntry) {
  // U(0) = {0,1,2}, U(1) = {1,2,3}
  const auto ds = from_train(4, 2, {{0, 0, {}}, {1, 0, {}}, {2, 0, {}}, {1, 1, {}}, {2, 1, {}}, {3, 1, {}}});
  const auto w = spectral::jaccard_similarity(ds);
  EXPECT_DOUBLE_EQ(w.at(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(w.at(1, 0), 0.5);
  EXPECT_EQ(w.at(0, 0), 0.0);
}

TEST(Jaccard, IdenticalAndDisjointSets) {
  const auto ds = from_train(3, 3, {{0, 0, {}}, {1, 0, {}}, {0, 1, {}}, {1, 1, {}}, {2, 2, {}}});
  const auto w = spectral::jaccard_similarity(ds);
  EXPECT_DOUBLE_EQ(w.at(0, 1), 1.0);
  EXPECT_EQ(w.at(0, 2), 0.0);
  EXPECT_EQ(w.nnz(), 2u);  // only the (0,1) pair, both directions
}

TEST(Jaccard, ItemWithoutUsersFails) {
  const auto ds = from_train(1, 2, {{0, 0, {}}});
  EXPECT_THROW(spectral::jaccard_similarity(ds), PreconditionError);
}

TEST(Jaccard, SymmetricBoundedZeroDiagonal) {
  Rng rng(3);
  std::vector<Interaction> train;
  for (UserId u = 0; u < 30; ++u)
    for (ItemId i = 0; i < 25; ++i)
      if (uniform_unit(rng) < 0.2 || i == u % 25) train.push_back({u, i, {}});
  const auto w = dense(spectral::jaccard_similarity(from_train(30, 25, train)));
  EXPECT_TRUE(w.isApprox(w.transpose(), 0.0));
  EXPECT_GE(w.minCoeff(), 0.0);
  EXPECT_LE(w.maxCoeff(), 1.0);
  EXPECT_EQ(w.diagonal().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Laplacian, TwoNodeGraphIsExact) {
  for (double weight : {0.1, 0.7, 1.0}) {
    Eigen::MatrixXd w(2, 2);
    w << 0, weight, weight, 0;
    const auto lap = spectral::normalized_laplacian(from_dense(w));
    const auto l = dense(lap.matrix);
    EXPECT_EQ(l(0, 0), 1.0);
    EXPECT_EQ(l(1, 1), 1.0);
    EXPECT_EQ(l(0, 1), -1.0);
    EXPECT_EQ(l(1, 0), -1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
    EXPECT_NEAR(es.eigenvalues()[0], 0.0, 1e-15);
    EXPECT_NEAR(es.eigenvalues()[1], 2.0, 1e-15);
  }
}

TEST(Spectral, TwoNodeSpectrumIsExact) {
  Eigen::MatrixXd w(2, 2);
  w << 0, 0.7, 0.7, 0;
  spectral::SpectralOptions opt;
  opt.dim = 1;
  for (auto solver : {spectral::Solver::Auto, spectral::Solver::Dense}) {
    opt.solver = solver;
    const auto e = spectral::spectral_embed(spectral::normalized_laplacian(from_dense(w)), opt);
    ASSERT_EQ(e.trivial_eigenvalues.size(), 1u);
    EXPECT_EQ(e.trivial_eigenvalues[0], 0.0);
    EXPECT_EQ(e.eigenvalues, std::vector<double>{2.0});
  }
}

TEST(Laplacian, NullVectorPerComponent) {
  Rng rng(5);
  const auto w = random_connected(40, 0.1, rng);
  const auto lap = spectral::normalized_laplacian(w);
  std::vector<double> x(40), y(40);
  for (std::size_t i = 0; i < 40; ++i) x[i] = std::sqrt(lap.degree[i]);
  lap.matrix.multiply(x, y);
  for (double v : y) EXPECT_NEAR(v, 0.0, 1e-10);
}

TEST(Laplacian, PositiveSemidefinite) {
  Rng rng(6);
  const auto lap = spectral::normalized_laplacian(random_connected(60, 0.08, rng));
  std::vector<double> x(60), y(60);
  for (int t = 0; t < 1000; ++t) {
    for (auto& v : x) v = 2.0 * uniform_unit(rng) - 1.0;
    lap.matrix.multiply(x, y);
    double q = 0.0;
    for (std::size_t i = 0; i < 60; ++i) q += x[i] * y[i];
    EXPECT_GE(q, -1e-9);
  }
}

TEST(Laplacian, ScaleInvariant) {
  Rng rng(7);
  const auto w = random_connected(30, 0.2, rng);
  auto scaled = w;
  for (auto& v : scaled.val) v *= 3.7;
  const auto a = dense(spectral::normalized_laplacian(w).matrix);
  const auto b = dense(spectral::normalized_laplacian(scaled).matrix);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Laplacian, IsolatedItemGetsZeroRow) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  w(0, 1) = w(1, 0) = 1.0;
  const auto l = dense(spectral::normalized_laplacian(from_dense(w)).matrix);
  EXPECT_EQ(l.row(2).cwiseAbs().sum(), 0.0);
}

TEST(Embed, PathOfThreeGivesMiddleEigenvalue) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
  w(0, 1) = w(1, 0) = w(1, 2) = w(2, 1) = 1.0;
  const auto lap = spectral::normalized_laplacian(from_dense(w));
  for (auto solver : {spectral::Solver::Dense, spectral::Solver::Lanczos}) {
    spectral::SpectralOptions opt;
    opt.dim = 1;
    opt.solver = solver;
    const auto e = spectral::spectral_embed(lap, opt);
    ASSERT_EQ(e.eigenvalues.size(), 1u);
    EXPECT_NEAR(e.eigenvalues[0], 1.0, 1e-10);
    EXPECT_EQ(e.skipped_trivial, 1u);
  }
}

TEST(Embed, ZeroDimensionRejected) {
  Eigen::MatrixXd w(2, 2);
  w << 0, 1, 1, 0;
  spectral::SpectralOptions opt;
  opt.dim = 0;
  EXPECT_THROW(spectral::spectral_embed(spectral::normalized_laplacian(from_dense(w)), opt),
               PreconditionError);
}

TEST(Embed, TooManyDimensionsRejected) {
  Eigen::MatrixXd w(2, 2);
  w << 0, 1, 1, 0;
  spectral::SpectralOptions opt;
  opt.dim = 2;
  EXPECT_THROW(spectral::spectral_embed(spectral::normalized_laplacian(from_dense(w)), opt),
               PreconditionError);
}

// Eigenvalues of the oracle after dropping the `skip` smallest.
std::vector<double> oracle_values(const Eigen::MatrixXd& l, std::size_t skip, std::size_t d) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  std::vector<double> v;
  for (std::size_t k = 0; k < d; ++k) v.push_back(es.eigenvalues()[skip + k]);
  return v;
}

TEST(Embed, LanczosMatchesDenseOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const std::size_t n = 40 + uniform_index(rng, 160);
    const auto lap = spectral::normalized_laplacian(random_connected(n, 0.03, rng));
    spectral::SpectralOptions opt;
    opt.dim = 12;
    opt.seed = trial;
    opt.solver = spectral::Solver::Lanczos;
    const auto e = spectral::spectral_embed(lap, opt);
    const auto expected = oracle_values(dense(lap.matrix), 1, opt.dim);
    ASSERT_EQ(e.eigenvalues.size(), opt.dim);
    for (std::size_t k = 0; k < opt.dim; ++k) {
      EXPECT_NEAR(e.eigenvalues[k], expected[k], 1e-6) << "trial " << trial << " k " << k;
      EXPECT_LE(e.residuals[k], 1e-6);
      EXPECT_GT(e.eigenvalues[k], 1e-8);
    }
    EXPECT_TRUE(e.used_lanczos);
    ASSERT_EQ(e.trivial_eigenvalues.size(), 1u);
    EXPECT_LT(std::abs(e.trivial_eigenvalues[0]), 1e-8);
  }
}

TEST(Embed, VectorsMatchOracleUpToSign) {
  Rng rng(13);
  const auto lap = spectral::normalized_laplacian(random_connected(80, 0.05, rng));
  spectral::SpectralOptions opt;
  opt.dim = 6;
  opt.solver = spectral::Solver::Lanczos;
  const auto e = spectral::spectral_embed(lap, opt);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(lap.matrix));
  for (std::size_t k = 0; k < opt.dim; ++k) {
    const double gap = std::min(es.eigenvalues()[k + 2] - es.eigenvalues()[k + 1],
                                es.eigenvalues()[k + 1] - es.eigenvalues()[k]);
    if (gap < 1e-3) continue;  // clustered: only the subspace is defined
    double cosine = 0.0, norm = 0.0;
    for (std::size_t r = 0; r < 80; ++r) {
      cosine += e.vectors(r, k) * es.eigenvectors()(r, k + 1);
      norm += e.vectors(r, k) * e.vectors(r, k);
    }
    EXPECT_NEAR(norm, 1.0, 1e-10);
    EXPECT_GT(std::abs(cosine), 1.0 - 1e-8);  // angle below ~1e-4
  }
}

TEST(Embed, DisconnectedGraphSkipsOneDirectionPerComponent) {
  Rng rng(17);
  const auto a = random_connected(30, 0.1, rng);
  const auto b = random_connected(25, 0.1, rng);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(55, 55);
  w.topLeftCorner(30, 30) = dense(a);
  w.bottomRightCorner(25, 25) = dense(b);
  const auto lap = spectral::normalized_laplacian(from_dense(w));
  for (auto solver : {spectral::Solver::Dense, spectral::Solver::Lanczos}) {
    spectral::SpectralOptions opt;
    opt.dim = 5;
    opt.solver = solver;
    const auto e = spectral::spectral_embed(lap, opt);
    EXPECT_EQ(e.skipped_trivial, 2u);
    const auto expected = oracle_values(dense(lap.matrix), 2, 5);
    for (std::size_t k = 0; k < 5; ++k) EXPECT_NEAR(e.eigenvalues[k], expected[k], 1e-6);
  }
}

TEST(Embed, RepeatedEigenvaluesAreAllFound) {
  // Two identical disjoint cycles: every non-trivial eigenvalue is doubled.
  const std::size_t c = 12;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(2 * c, 2 * c);
  for (std::size_t off : {std::size_t{0}, c}) {
    for (std::size_t i = 0; i < c; ++i) {
      const auto j = (i + 1) % c;
      w(off + i, off + j) = w(off + j, off + i) = 1.0;
    }
  }
  const auto lap = spectral::normalized_laplacian(from_dense(w));
  spectral::SpectralOptions opt;
  opt.dim = 6;
  opt.solver = spectral::Solver::Lanczos;
  const auto e = spectral::spectral_embed(lap, opt);
  const auto expected = oracle_values(dense(lap.matrix), 2, 6);
  for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(e.eigenvalues[k], expected[k], 1e-6);
}

TEST(Embed, DeterministicForSeed) {
  Rng rng(19);
  const auto lap = spectral::normalized_laplacian(random_connected(70, 0.05, rng));
  spectral::SpectralOptions opt;
  opt.dim = 4;
  opt.seed = 99;
  opt.solver = spectral::Solver::Lanczos;
  EXPECT_EQ(spectral::spectral_embed(lap, opt).vectors, spectral::spectral_embed(lap, opt).vectors);
}

TEST(Embed, NonConvergenceCarriesResidual) {
  Rng rng(23);
  const auto lap = spectral::normalized_laplacian(random_connected(200, 0.02, rng));
  spectral::SpectralOptions opt;
  opt.dim = 10;
  opt.max_iter = 12;
  opt.solver = spectral::Solver::Lanczos;
  try {
    spectral::spectral_embed(lap, opt);
    FAIL() << "expected a convergence error";
  } catch (const ConvergenceError& e) {
    EXPECT_GT(e.worst_residual(), opt.tol);
  }
}

TEST(Persist, EmbeddingRoundTrip) {
  dtlns::testing::TempDir dir;
  Matrix m(3, 2);
  m(0, 0) = 1.5;
  m(2, 1) = -0.25;
  spectral::write_embedding(dir / "e.bin", m);
  EXPECT_EQ(spectral::read_embedding(dir / "e.bin"), m);
}

}  // namespace
