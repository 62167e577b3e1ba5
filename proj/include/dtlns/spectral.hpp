#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dtlns/common.hpp"
#include "dtlns/dataset.hpp"
#include "dtlns/sparse.hpp"

namespace dtlns::spectral {

using dtlns::CsrMatrix;

/// Item-item Jaccard similarity over train-set user sets. Symmetric, zero
/// diagonal; pairs without co-occurring users are not stored.
CsrMatrix jaccard_similarity(const dataset::InteractionDataset& ds);

struct Laplacian {
  CsrMatrix matrix;             // I - D^{-1/2} W D^{-1/2}
  std::vector<double> degree;   // row sums of W
};

/// Isolated items (zero degree) get a zero row, so each one forms its own
/// null direction and later receives a zero embedding row.
Laplacian normalized_laplacian(const CsrMatrix& w);

/// Connected components of W's nonzero pattern; returns a label per node.
std::vector<std::uint32_t> connected_components(const CsrMatrix& w, std::size_t& count);

enum class Solver { Auto, Dense, Lanczos };

struct SpectralOptions {
  std::size_t dim = 32;
  double tol = 1e-6;            // bound on ||L v - lambda v||
  std::size_t max_iter = 3000;  // Krylov steps per Lanczos run
  std::uint64_t seed = 0;
  Solver solver = Solver::Auto;
  std::size_t dense_threshold = 2000;  // Auto uses the dense solver below this size
};

struct SpectralEmbedding {
  Matrix vectors;                     // item_count x dim, unit-norm columns
  std::vector<double> eigenvalues;    // ascending
  std::size_t skipped_trivial = 0;    // one per connected component
  std::vector<double> trivial_eigenvalues;
  std::vector<double> residuals;      // ||L v - lambda v|| per column
  bool used_lanczos = false;
};

/// The `dim` smallest eigenpairs of L after discarding the null direction of
/// every connected component.
SpectralEmbedding spectral_embed(const Laplacian& lap, const SpectralOptions& opt);

// `i j w` per line, upper triangle only.
void write_coordinate(const std::filesystem::path& path, const CsrMatrix& w);

// Binary little-endian float64 row-major, header: "DTLE" magic, u64 rows, u64 cols.
void write_embedding(const std::filesystem::path& path, const Matrix& m);
Matrix read_embedding(const std::filesystem::path& path);

}  // namespace dtlns::spectral
