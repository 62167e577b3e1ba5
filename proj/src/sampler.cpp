#include "dtlns/sampler.hpp"

#include <algorithm>

#include "dtlns/simd/kernels.hpp"

namespace dtlns::sampler {

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::RNS: return "rns";
    case Kind::DNS: return "dns";
    case Kind::MixGCF: return "mixgcf";
    case Kind::DTMHNS: return "dtmhns";
    case Kind::DNSPlus: return "dns+";
  }
  return "?";
}

Kind parse_kind(std::string_view text) {
  if (text == "rns") return Kind::RNS;
  if (text == "dns") return Kind::DNS;
  if (text == "mixgcf") return Kind::MixGCF;
  if (text == "dtmhns") return Kind::DTMHNS;
  if (text == "dns+") return Kind::DNSPlus;
  throw Error("unknown sampler kind: " + std::string(text));
}

ItemId sample_rns(std::span<const ItemId> positives, std::size_t item_count, Rng& rng) {
  if (positives.size() >= item_count) {
    throw PreconditionError("sample_rns: user has no unobserved items");
  }
  while (true) {
    const auto i = static_cast<ItemId>(uniform_index(rng, item_count));
    if (!std::binary_search(positives.begin(), positives.end(), i)) return i;
  }
}

std::vector<ItemId> draw_pool(std::span<const ItemId> positives, std::size_t item_count,
                              std::size_t n, Rng& rng) {
  std::vector<ItemId> pool(n);
  for (auto& i : pool) i = sample_rns(positives, item_count, rng);
  return pool;
}

double mixup_embedding(std::span<const double> e_p, std::span<const double> e_i,
                       std::span<double> out, Rng& rng) {
  if (e_p.size() != e_i.size() || out.size() != e_p.size()) {
    throw PreconditionError("mixup_embedding: dimension mismatch");
  }
  const double lambda = uniform_unit(rng);
  simd::lerp(lambda, e_p, e_i, out);
  return lambda;
}

std::vector<double> minmax_normalize(std::span<const double> scores) {
  if (scores.empty()) throw PreconditionError("minmax_normalize: empty input");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double range = *hi - *lo;
  std::vector<double> out(scores.size(), 0.0);
  if (range > 0.0) {
    for (std::size_t k = 0; k < scores.size(); ++k) out[k] = (scores[k] - *lo) / range;
  }
  return out;
}

namespace {

// Index of the best entry: highest score, then lowest item id, then first position.
std::size_t argmax(std::span<const double> score, std::span<const ItemId> pool) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < pool.size(); ++k) {
    if (score[k] > score[best] || (score[k] == score[best] && pool[k] < pool[best])) best = k;
  }
  return best;
}

void check_codes(const tree::DualCodes& codes, ItemId positive, std::span<const ItemId> pool) {
  const auto n = std::min(codes.collab.size(), codes.semantic.size());
  if (positive >= n || std::any_of(pool.begin(), pool.end(), [&](ItemId i) { return i >= n; })) {
    throw PreconditionError("sampler: path codes missing for a pool item");
  }
}

}  // namespace

HardNegative multiview_score(std::span<const double> user_vec, ItemId positive,
                             std::span<const ItemId> pool, const Matrix& item_emb,
                             const tree::DualCodes& codes, double alpha_c, double alpha_s,
                             std::span<const double> lambdas) {
  if (pool.empty()) throw PreconditionError("multiview_score: empty pool");
  if (lambdas.size() != pool.size()) throw PreconditionError("multiview_score: one lambda per candidate");
  check_codes(codes, positive, pool);

  const std::size_t d = item_emb.cols();
  const auto e_p = item_emb.row(positive);
  Matrix mixed(pool.size(), d);
  std::vector<double> pref(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    simd::lerp(lambdas[k], e_p, item_emb.row(pool[k]), mixed.row(k));
    pref[k] = simd::dot(user_vec, mixed.row(k));
  }
  const auto norm = minmax_normalize(pref);

  HardNegative out;
  out.pool_scores.resize(pool.size());
  std::vector<double> total(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    auto& b = out.pool_scores[k];
    b.preference = norm[k];
    b.sim_c = tree::lcp_similarity(codes.collab[positive], codes.collab[pool[k]]);
    b.sim_s = tree::lcp_similarity(codes.semantic[positive], codes.semantic[pool[k]]);
    b.total = b.preference + alpha_c * b.sim_c + alpha_s * b.sim_s;
    total[k] = b.total;
  }
  const std::size_t best = argmax(total, pool);
  out.item = pool[best];
  out.lambda = lambdas[best];
  out.breakdown = out.pool_scores[best];
  out.mixed_embedding.assign(mixed.row(best).begin(), mixed.row(best).end());
  return out;
}

HardNegative multiview_score(std::span<const double> user_vec, ItemId positive,
                             std::span<const ItemId> pool, const Matrix& item_emb,
                             const tree::DualCodes& codes, double alpha_c, double alpha_s,
                             Rng& rng) {
  std::vector<double> lambdas(pool.size());
  for (auto& l : lambdas) l = uniform_unit(rng);
  return multiview_score(user_vec, positive, pool, item_emb, codes, alpha_c, alpha_s, lambdas);
}

ItemId sample_dns(std::span<const double> user_vec, std::span<const ItemId> pool,
                  const Matrix& item_emb) {
  if (pool.empty()) throw PreconditionError("sample_dns: empty pool");
  std::vector<double> s(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) s[k] = simd::dot(user_vec, item_emb.row(pool[k]));
  return pool[argmax(s, pool)];
}

ItemId sample_dns_plus(std::span<const double> user_vec, ItemId positive,
                       std::span<const ItemId> pool, const Matrix& item_emb,
                       const tree::DualCodes& codes, double alpha_c, double alpha_s) {
  if (pool.empty()) throw PreconditionError("sample_dns_plus: empty pool");
  check_codes(codes, positive, pool);
  std::vector<double> s(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) s[k] = simd::dot(user_vec, item_emb.row(pool[k]));
  auto total = minmax_normalize(s);
  for (std::size_t k = 0; k < pool.size(); ++k) {
    total[k] += alpha_c * tree::lcp_similarity(codes.collab[positive], codes.collab[pool[k]]) +
                alpha_s * tree::lcp_similarity(codes.semantic[positive], codes.semantic[pool[k]]);
  }
  return pool[argmax(total, pool)];
}

ComposedSampler sampler_integration(Kind base, bool with_fni, bool with_dualtree, double alpha_c,
                                    double alpha_s, std::size_t pool_size) {
  if (base != Kind::DNS) {
    throw PreconditionError("sampler_integration: only DNS can be composed, got " + to_string(base));
  }
  ComposedSampler out;
  out.augmented_positives = with_fni;
  out.config.kind = with_dualtree ? Kind::DNSPlus : Kind::DNS;
  out.config.alpha_c = with_dualtree ? alpha_c : 0.0;
  out.config.alpha_s = with_dualtree ? alpha_s : 0.0;
  out.config.pool_size = pool_size;
  return out;
}

backbone::Triple sample_negative(const SamplerConfig& cfg, UserId u, ItemId positive,
                                 std::span<const ItemId> positives, const backbone::Embeddings& emb,
                                 const tree::DualCodes* codes, Rng& rng) {
  backbone::Triple t{u, positive, 0, 0.0};
  if (cfg.kind == Kind::RNS) {
    t.neg = sample_rns(positives, emb.items.rows(), rng);
    return t;
  }
  if (cfg.uses_codes() && !codes) throw PreconditionError("sampler: dual-tree codes required");
  const auto pool = draw_pool(positives, emb.items.rows(), cfg.pool_size, rng);
  const auto user_vec = emb.users.row(u);
  switch (cfg.kind) {
    case Kind::DNS:
      t.neg = sample_dns(user_vec, pool, emb.items);
      break;
    case Kind::DNSPlus:
      t.neg = sample_dns_plus(user_vec, positive, pool, emb.items, *codes, cfg.alpha_c, cfg.alpha_s);
      break;
    case Kind::MixGCF:
    case Kind::DTMHNS: {
      std::vector<double> lambdas(pool.size());
      for (auto& l : lambdas) l = uniform_unit(rng);
      if (cfg.kind == Kind::MixGCF) {
        // Min-max scaling is monotone, so the raw mixed preference decides.
        std::vector<double> mixed(emb.items.cols()), pref(pool.size());
        for (std::size_t k = 0; k < pool.size(); ++k) {
          simd::lerp(lambdas[k], emb.items.row(positive), emb.items.row(pool[k]), mixed);
          pref[k] = simd::dot(user_vec, mixed);
        }
        const std::size_t best = argmax(pref, pool);
        t.neg = pool[best];
        t.lambda = lambdas[best];
      } else {
        const auto hn = multiview_score(user_vec, positive, pool, emb.items, *codes, cfg.alpha_c,
                                        cfg.alpha_s, lambdas);
        t.neg = hn.item;
        t.lambda = hn.lambda;
      }
      break;
    }
    case Kind::RNS:
      break;
  }
  return t;
}

}  // namespace dtlns::sampler
