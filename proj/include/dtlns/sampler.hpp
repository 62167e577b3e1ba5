#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dtlns/backbone.hpp"
#include "dtlns/common.hpp"
#include "dtlns/tree.hpp"

namespace dtlns::sampler {

enum class Kind {
  RNS,     // uniform unobserved item
  DNS,     // highest raw preference in a uniform pool
  MixGCF,  // positive mixing, preference-only selection
  DTMHNS,  // positive mixing, preference plus dual-tree similarity
  DNSPlus  // raw preference plus dual-tree similarity, no mixing
};

std::string to_string(Kind kind);
Kind parse_kind(std::string_view text);

struct SamplerConfig {
  Kind kind = Kind::DTMHNS;
  double alpha_c = 0.1;
  double alpha_s = 0.3;
  std::size_t pool_size = 10;

  bool uses_codes() const noexcept { return kind == Kind::DTMHNS || kind == Kind::DNSPlus; }
  bool operator==(const SamplerConfig&) const = default;
};

/// Uniform draw (with replacement) of `n` items outside `positives` (sorted).
std::vector<ItemId> draw_pool(std::span<const ItemId> positives, std::size_t item_count,
                              std::size_t n, Rng& rng);

/// Draws lambda ~ U(0,1) and writes lambda * e_p + (1 - lambda) * e_i to `out`.
double mixup_embedding(std::span<const double> e_p, std::span<const double> e_i,
                       std::span<double> out, Rng& rng);

/// (x - min) / (max - min); an all-equal input maps to zeros.
std::vector<double> minmax_normalize(std::span<const double> scores);

struct ScoreBreakdown {
  double preference = 0.0;  // min-max normalized over the pool
  double sim_c = 0.0;
  double sim_s = 0.0;
  double total = 0.0;
};

struct HardNegative {
  ItemId item = 0;
  double lambda = 0.0;
  std::vector<double> mixed_embedding;
  ScoreBreakdown breakdown;
  std::vector<ScoreBreakdown> pool_scores;  // one per pool entry
};

/// Dual-tree guided selection over a candidate pool. Each candidate i gets a
/// mixed embedding with its own lambda, a preference e_u . mixed, and
/// Norm(preference) + alpha_c * lcp(c) + alpha_s * lcp(s). Returns the argmax,
/// ties by lowest item id.
HardNegative multiview_score(std::span<const double> user_vec, ItemId positive,
                             std::span<const ItemId> pool, const Matrix& item_emb,
                             const tree::DualCodes& codes, double alpha_c, double alpha_s,
                             std::span<const double> lambdas);

/// Same, drawing one lambda per candidate from `rng` first.
HardNegative multiview_score(std::span<const double> user_vec, ItemId positive,
                             std::span<const ItemId> pool, const Matrix& item_emb,
                             const tree::DualCodes& codes, double alpha_c, double alpha_s,
                             Rng& rng);

ItemId sample_rns(std::span<const ItemId> positives, std::size_t item_count, Rng& rng);

/// argmax of raw e_u . e_i over the pool, ties by lowest id.
ItemId sample_dns(std::span<const double> user_vec, std::span<const ItemId> pool,
                  const Matrix& item_emb);

/// DNS with dual-tree terms added to the normalized raw preference.
ItemId sample_dns_plus(std::span<const double> user_vec, ItemId positive,
                       std::span<const ItemId> pool, const Matrix& item_emb,
                       const tree::DualCodes& codes, double alpha_c, double alpha_s);

/// Composition of a base sampler with FNI augmentation and/or dual-tree
/// scoring. Only DNS is composable.
struct ComposedSampler {
  SamplerConfig config;
  bool augmented_positives = false;  // train on the FNI-augmented set
};

ComposedSampler sampler_integration(Kind base, bool with_fni, bool with_dualtree, double alpha_c,
                                    double alpha_s, std::size_t pool_size = 10);

/// One negative for (u, positive) under `cfg`, as a BPR triple.
backbone::Triple sample_negative(const SamplerConfig& cfg, UserId u, ItemId positive,
                                 std::span<const ItemId> positives, const backbone::Embeddings& emb,
                                 const tree::DualCodes* codes, Rng& rng);

}  // namespace dtlns::sampler
