#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dtlns/common.hpp"
#include "dtlns/dataset.hpp"
#include "dtlns/sparse.hpp"

namespace dtlns::backbone {

enum class Kind { MF, LightGCN };

std::string to_string(Kind kind);
Kind parse_kind(std::string_view text);

struct AdamState {
  Matrix m_user, v_user, m_item, v_item;
  std::uint64_t step = 0;
};

/// Layer-0 embedding tables plus optimizer moments.
struct ModelState {
  Kind kind = Kind::LightGCN;
  std::size_t layers = 3;  // ignored for MF
  Matrix user_emb;
  Matrix item_emb;
  AdamState adam;

  std::size_t dim() const noexcept { return user_emb.cols(); }
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 2048;
  double l2 = 1e-4;
  std::size_t epochs = 1000;
  std::uint64_t seed = 0;
  std::size_t patience = 10;  // in evaluation rounds; 0 disables early stopping
  std::size_t eval_every = 1;

  bool operator==(const TrainConfig&) const = default;
};

/// Xavier-uniform tables: entries in +-sqrt(6 / (rows + dim)).
ModelState init_params(std::size_t user_count, std::size_t item_count, std::size_t dim, Kind kind,
                       std::size_t layers, std::uint64_t seed);

/// Symmetric-normalized bipartite adjacency over users (rows 0..U-1) and
/// items (rows U..U+I-1): A[u,i] = 1 / sqrt(|N(u)| |N(i)|).
struct Graph {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  CsrMatrix adjacency;
};

Graph build_graph(const dataset::InteractionDataset& ds);

struct Embeddings {
  Matrix users;
  Matrix items;
};

/// LightGCN: mean of layers 0..L of repeated adjacency products. MF returns
/// the tables unchanged.
Embeddings propagate(const ModelState& state, const Graph& graph);

double score(const Embeddings& emb, UserId u, ItemId i);

/// One BPR training example. The negative embedding is
/// lambda * e_pos + (1 - lambda) * e_neg; lambda = 0 gives a plain negative.
struct Triple {
  UserId user = 0;
  ItemId pos = 0;
  ItemId neg = 0;
  double lambda = 0.0;
};

/// -log sigmoid(diff), computed without overflow.
double pair_loss(double diff);

struct Gradients {
  Matrix user;
  Matrix item;
};

/// Batch loss (1/B) * sum_t [ -log sigmoid(s_pos - s_neg) + l2 * (|u0|^2 + |p0|^2 + |n0|^2) ]
/// with gradients with respect to the layer-0 tables. `forward` may pass
/// embeddings already propagated from `state`.
double bpr_loss(const ModelState& state, const Graph& graph, std::span<const Triple> batch,
                double l2, Gradients* grad, const Embeddings* forward = nullptr);

/// bpr_loss followed by one Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
/// Throws on a non-finite loss.
double bpr_step(ModelState& state, const Graph& graph, std::span<const Triple> batch,
                const TrainConfig& cfg, const Embeddings* forward = nullptr);

bool all_finite(const ModelState& state);

// Checkpoint: "DTLC" magic, u32 version, u32 kind, u64 layers/users/items/dim/step,
// then little-endian float64 user and item tables.
void save_checkpoint(const std::filesystem::path& path, const ModelState& state);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace dtlns::backbone
