#include "dtlns/spectral.hpp"

#include <Eigen/Dense>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "binary_io.hpp"
#include "dtlns/simd/kernels.hpp"

namespace dtlns::spectral {

CsrMatrix jaccard_similarity(const dataset::InteractionDataset& ds) {
  if (ds.train.empty()) throw PreconditionError("jaccard_similarity: empty train set");
  std::vector<std::vector<UserId>> item_users(ds.item_count);
  for (const auto& e : ds.train) item_users[e.item].push_back(e.user);

  CsrMatrix w;
  w.dim = ds.item_count;
  w.row_ptr.assign(1, 0);
  std::vector<std::uint32_t> overlap(ds.item_count, 0);
  std::vector<ItemId> touched;
  for (ItemId i = 0; i < ds.item_count; ++i) {
    if (item_users[i].empty()) {
      throw PreconditionError("jaccard_similarity: item " + std::to_string(i) +
                              " has no train interactions");
    }
    touched.clear();
    for (UserId u : item_users[i]) {
      for (ItemId j : ds.user_pos[u]) {
        if (j == i) continue;
        if (overlap[j]++ == 0) touched.push_back(j);
      }
    }
    std::sort(touched.begin(), touched.end());
    const double size_i = static_cast<double>(item_users[i].size());
    for (ItemId j : touched) {
      const double inter = overlap[j];
      const double uni = size_i + static_cast<double>(item_users[j].size()) - inter;
      w.col.push_back(j);
      w.val.push_back(inter / uni);
      overlap[j] = 0;
    }
    w.row_ptr.push_back(w.col.size());
  }
  return w;
}

Laplacian normalized_laplacian(const CsrMatrix& w) {
  Laplacian lap;
  lap.degree.assign(w.dim, 0.0);
  for (std::size_t r = 0; r < w.dim; ++r) {
    for (std::size_t k = w.row_ptr[r]; k < w.row_ptr[r + 1]; ++k) {
      if (w.col[k] != r) lap.degree[r] += w.val[k];
    }
  }
  std::size_t isolated = 0;
  for (std::size_t r = 0; r < w.dim; ++r) {
    if (lap.degree[r] <= 0.0) ++isolated;
  }
  if (isolated > 0) spdlog::warn("normalized_laplacian: {} isolated items", isolated);

  auto& m = lap.matrix;
  m.dim = w.dim;
  m.row_ptr.assign(1, 0);
  for (std::size_t r = 0; r < w.dim; ++r) {
    bool diag_done = false;
    auto emit_diag = [&] {
      m.col.push_back(static_cast<std::uint32_t>(r));
      m.val.push_back(lap.degree[r] > 0.0 ? 1.0 : 0.0);
      diag_done = true;
    };
    for (std::size_t k = w.row_ptr[r]; k < w.row_ptr[r + 1]; ++k) {
      const auto c = w.col[k];
      if (c == r) continue;
      if (!diag_done && c > r) emit_diag();
      m.col.push_back(c);
      // sqrt(d * d) == d exactly, so equal-degree neighbours normalise to exactly -w / d.
      const double dd = lap.degree[r] * lap.degree[c];
      m.val.push_back(dd > 0.0 ? -w.val[k] / std::sqrt(dd) : 0.0);
    }
    if (!diag_done) emit_diag();
    m.row_ptr.push_back(m.col.size());
  }
  return lap;
}

std::vector<std::uint32_t> connected_components(const CsrMatrix& w, std::size_t& count) {
  constexpr auto unset = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> label(w.dim, unset);
  std::vector<std::uint32_t> stack;
  count = 0;
  for (std::size_t s = 0; s < w.dim; ++s) {
    if (label[s] != unset) continue;
    const auto id = static_cast<std::uint32_t>(count++);
    label[s] = id;
    stack.assign(1, static_cast<std::uint32_t>(s));
    while (!stack.empty()) {
      const auto r = stack.back();
      stack.pop_back();
      for (std::size_t k = w.row_ptr[r]; k < w.row_ptr[r + 1]; ++k) {
        const auto c = w.col[k];
        if (c != r && w.val[k] != 0.0 && label[c] == unset) {
          label[c] = id;
          stack.push_back(c);
        }
      }
    }
  }
  return label;
}

namespace {

using Vec = std::vector<double>;

double norm(std::span<const double> v) { return std::sqrt(simd::dot(v, v)); }

// Two passes of classical Gram-Schmidt against every basis vector.
void orthogonalize(Vec& w, const std::vector<Vec>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& b : basis) simd::axpy(-simd::dot(b, w), b, w);
  }
}

void fix_sign(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best]) + 1e-12) best = i;
  }
  if (v[best] < 0.0) {
    for (auto& x : v) x = -x;
  }
}

struct EigenPairs {
  std::vector<double> values;
  std::vector<Vec> vectors;
  std::vector<double> residuals;
};

double residual(const CsrMatrix& a, const Vec& v, double lambda, Vec& scratch) {
  a.multiply(v, scratch);
  simd::axpy(-lambda, v, scratch);
  return norm(scratch);
}

// Lanczos with full reorthogonalization restricted to the orthogonal
// complement of `locked`. Returns the `want` smallest converged Ritz pairs.
EigenPairs lanczos_smallest(const CsrMatrix& a, const std::vector<Vec>& locked, std::size_t want,
                            double tol, std::size_t max_iter, Rng& rng) {
  const std::size_t n = a.dim;
  const std::size_t space = n - locked.size();
  want = std::min(want, space);

  std::vector<Vec> basis;  // locked vectors followed by Lanczos vectors
  basis.reserve(locked.size() + std::min(space, max_iter) + 1);
  for (const auto& z : locked) basis.push_back(z);
  const std::size_t first = basis.size();

  std::vector<double> alpha, beta;  // beta[j] couples vectors j and j+1
  Vec scratch(n), w(n);

  auto fresh_vector = [&]() -> bool {
    for (int attempt = 0; attempt < 4; ++attempt) {
      Vec q(n);
      for (auto& x : q) x = 2.0 * uniform_unit(rng) - 1.0;
      orthogonalize(q, basis);
      const double nq = norm(q);
      if (nq > 1e-8) {
        for (auto& x : q) x /= nq;
        basis.push_back(std::move(q));
        return true;
      }
    }
    return false;
  };

  if (!fresh_vector()) throw ConvergenceError("lanczos: cannot draw a start vector", 0.0);

  std::size_t next_check = std::min(space, std::max<std::size_t>(2 * want + 10, 20));
  double worst = std::numeric_limits<double>::infinity();

  while (true) {
    const std::size_t j = basis.size() - first - 1;
    const Vec& q = basis.back();
    a.multiply(q, w);
    if (j > 0 && beta[j - 1] != 0.0) simd::axpy(-beta[j - 1], basis[basis.size() - 2], w);
    const double aj = simd::dot(q, w);
    simd::axpy(-aj, q, w);
    orthogonalize(w, basis);
    alpha.push_back(aj);
    const double bj = norm(w);
    const std::size_t m = alpha.size();
    const bool exhausted = m >= space;

    if (m >= next_check || exhausted || m >= max_iter) {
      Eigen::VectorXd diag(static_cast<Eigen::Index>(m));
      Eigen::VectorXd sub(static_cast<Eigen::Index>(m > 0 ? m - 1 : 0));
      for (std::size_t k = 0; k < m; ++k) diag[static_cast<Eigen::Index>(k)] = alpha[k];
      for (std::size_t k = 0; k + 1 < m; ++k) sub[static_cast<Eigen::Index>(k)] = beta[k];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
      tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
      const auto& s = tri.eigenvectors();
      const double coupling = exhausted ? 0.0 : bj;

      bool estimates_ok = m >= want;
      for (std::size_t k = 0; k < want && estimates_ok; ++k) {
        const double est = std::abs(coupling * s(static_cast<Eigen::Index>(m - 1),
                                                 static_cast<Eigen::Index>(k)));
        if (est > 0.1 * tol) estimates_ok = false;
      }
      if (estimates_ok || exhausted || m >= max_iter) {
        EigenPairs out;
        worst = 0.0;
        for (std::size_t k = 0; k < want; ++k) {
          Vec y(n, 0.0);
          for (std::size_t t = 0; t < m; ++t) {
            simd::axpy(s(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)),
                       basis[first + t], y);
          }
          const double ny = norm(y);
          for (auto& x : y) x /= ny;
          const double lambda = tri.eigenvalues()[static_cast<Eigen::Index>(k)];
          const double r = residual(a, y, lambda, scratch);
          worst = std::max(worst, r);
          out.values.push_back(lambda);
          out.vectors.push_back(std::move(y));
          out.residuals.push_back(r);
        }
        if (worst <= tol) return out;
        if (exhausted || m >= max_iter) {
          throw ConvergenceError("lanczos: not converged within " + std::to_string(m) +
                                     " steps (worst residual " + std::to_string(worst) + ")",
                                 worst);
        }
      }
      next_check = std::min(space, std::max(m + 10, m + m / 5));
    }

    if (bj > 1e-10) {
      beta.push_back(bj);
      for (auto& x : w) x /= bj;
      basis.push_back(w);
    } else {
      // Invariant subspace found: continue from a fresh orthogonal direction.
      beta.push_back(0.0);
      if (!fresh_vector()) {
        throw ConvergenceError("lanczos: breakdown without a fresh direction", worst);
      }
    }
  }
}

SpectralEmbedding embed_from_eigs(const Laplacian& lap, std::size_t components, std::size_t dim,
                                  const Eigen::MatrixXd& vectors, const Eigen::VectorXd& values) {
  SpectralEmbedding out;
  out.skipped_trivial = components;
  for (std::size_t k = 0; k < components; ++k) {
    out.trivial_eigenvalues.push_back(values[static_cast<Eigen::Index>(k)]);
  }
  out.vectors = Matrix(lap.matrix.dim, dim);
  Vec v(lap.matrix.dim), scratch(lap.matrix.dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const auto col = static_cast<Eigen::Index>(components + k);
    for (std::size_t r = 0; r < v.size(); ++r) v[r] = vectors(static_cast<Eigen::Index>(r), col);
    fix_sign(v);
    const double lambda = values[col];
    out.eigenvalues.push_back(lambda);
    out.residuals.push_back(residual(lap.matrix, v, lambda, scratch));
    for (std::size_t r = 0; r < v.size(); ++r) out.vectors(r, k) = v[r];
  }
  return out;
}

SpectralEmbedding dense_embed(const Laplacian& lap, std::size_t components, std::size_t dim) {
  const auto n = static_cast<Eigen::Index>(lap.matrix.dim);
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t r = 0; r < lap.matrix.dim; ++r) {
    for (std::size_t k = lap.matrix.row_ptr[r]; k < lap.matrix.row_ptr[r + 1]; ++k) {
      a(static_cast<Eigen::Index>(r), lap.matrix.col[k]) = lap.matrix.val[k];
    }
  }
  if (n == 2) {
    // Closed form; the QR iteration lands an ulp off even on [[1,-1],[-1,1]].
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> direct;
    direct.computeDirect(Eigen::Matrix2d(a));
    return embed_from_eigs(lap, components, dim, direct.eigenvectors(), direct.eigenvalues());
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0.0);
  return embed_from_eigs(lap, components, dim, solver.eigenvectors(), solver.eigenvalues());
}

}  // namespace

SpectralEmbedding spectral_embed(const Laplacian& lap, const SpectralOptions& opt) {
  const std::size_t n = lap.matrix.dim;
  if (opt.dim < 1) throw PreconditionError("spectral_embed: dimension must be >= 1");
  std::size_t components = 0;
  const auto label = connected_components(lap.matrix, components);
  if (opt.dim + components > n) {
    throw PreconditionError("spectral_embed: dimension plus component count exceeds item count");
  }

  const bool use_dense = opt.solver == Solver::Dense ||
                         (opt.solver == Solver::Auto && n < opt.dense_threshold);
  if (use_dense) return dense_embed(lap, components, opt.dim);

  // Null directions: D^{1/2} 1 restricted to each component, e_i for isolated items.
  std::vector<Vec> null_space(components, Vec(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    null_space[label[r]][r] = lap.degree[r] > 0.0 ? std::sqrt(lap.degree[r]) : 1.0;
  }
  SpectralEmbedding out;
  out.used_lanczos = true;
  out.skipped_trivial = components;
  Vec scratch(n);
  for (auto& z : null_space) {
    const double nz = norm(z);
    for (auto& x : z) x /= nz;
    lap.matrix.multiply(z, scratch);
    out.trivial_eigenvalues.push_back(simd::dot(z, scratch));
  }

  Rng rng(opt.seed);
  EigenPairs found = lanczos_smallest(lap.matrix, null_space, opt.dim, opt.tol, opt.max_iter, rng);

  // A single-vector Krylov space sees one direction per repeated eigenvalue;
  // search the complement of what was found until nothing smaller remains.
  while (found.values.size() + components < n) {
    std::vector<Vec> locked = null_space;
    locked.insert(locked.end(), found.vectors.begin(), found.vectors.end());
    EigenPairs probe = lanczos_smallest(lap.matrix, locked, 1, opt.tol, opt.max_iter, rng);
    const double largest = found.values.back();
    if (probe.values.empty() || probe.values[0] >= largest - opt.tol) break;
    found.values.push_back(probe.values[0]);
    found.vectors.push_back(std::move(probe.vectors[0]));
    found.residuals.push_back(probe.residuals[0]);
    std::vector<std::size_t> order(found.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return found.values[x] < found.values[y]; });
    EigenPairs sorted;
    for (std::size_t k = 0; k < opt.dim; ++k) {
      sorted.values.push_back(found.values[order[k]]);
      sorted.vectors.push_back(std::move(found.vectors[order[k]]));
      sorted.residuals.push_back(found.residuals[order[k]]);
    }
    found = std::move(sorted);
  }

  out.vectors = Matrix(n, opt.dim);
  for (std::size_t k = 0; k < opt.dim; ++k) {
    fix_sign(found.vectors[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = found.vectors[k][r];
  }
  out.eigenvalues = std::move(found.values);
  out.residuals = std::move(found.residuals);
  return out;
}

void write_coordinate(const std::filesystem::path& path, const CsrMatrix& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  for (std::size_t r = 0; r < w.dim; ++r) {
    for (std::size_t k = w.row_ptr[r]; k < w.row_ptr[r + 1]; ++k) {
      if (w.col[k] > r) out << r << ' ' << w.col[k] << ' ' << w.val[k] << '\n';
    }
  }
}

using detail::get;
using detail::put;

void write_embedding(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write("DTLE", 4);
  put<std::uint64_t>(out, m.rows());
  put<std::uint64_t>(out, m.cols());
  out.write(reinterpret_cast<const char*>(m.values().data()),
            static_cast<std::streamsize>(m.values().size() * sizeof(double)));
}

Matrix read_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DTLE", 4) != 0) throw Error("bad embedding header: " + path.string());
  const auto rows = get<std::uint64_t>(in);
  const auto cols = get<std::uint64_t>(in);
  Matrix m(rows, cols);
  in.read(reinterpret_cast<char*>(m.values().data()),
          static_cast<std::streamsize>(m.values().size() * sizeof(double)));
  if (!in) throw Error("truncated embedding file: " + path.string());
  return m;
}

}  // namespace dtlns::spectral
