#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "dtlns/sampler.hpp"

namespace {

using namespace dtlns;
using tree::PathCode;

struct Instance {
  Matrix items;
  std::vector<double> user;
  tree::DualCodes codes;
  std::vector<ItemId> pool;
  std::vector<double> lambdas;
  ItemId positive = 0;
};

PathCode random_code(Rng& rng) {
  PathCode c;
  const auto len = 1 + uniform_index(rng, 4);
  for (std::size_t k = 0; k < len; ++k) c.indices.push_back(static_cast<std::uint32_t>(uniform_index(rng, 3)));
  return c;
}

Instance random_instance(Rng& rng, std::size_t n_items = 30, std::size_t d = 8, std::size_t pool = 10) {
  Instance x;
  x.items = Matrix(n_items, d);
  for (auto& v : x.items.values()) v = 2.0 * uniform_unit(rng) - 1.0;
  x.user.resize(d);
  for (auto& v : x.user) v = 2.0 * uniform_unit(rng) - 1.0;
  for (std::size_t i = 0; i < n_items; ++i) {
    x.codes.collab.push_back(random_code(rng));
    x.codes.semantic.push_back(random_code(rng));
  }
  x.positive = static_cast<ItemId>(uniform_index(rng, n_items));
  for (std::size_t k = 0; k < pool; ++k) {
    x.pool.push_back(static_cast<ItemId>(uniform_index(rng, n_items)));
    x.lambdas.push_back(uniform_unit(rng));
  }
  return x;
}

double brute_lcp(const PathCode& a, const PathCode& b) {
  std::size_t l = 0;
  while (l < a.size() && l < b.size() && a.indices[l] == b.indices[l]) ++l;
  return static_cast<double>(l) / static_cast<double>(std::min(a.size(), b.size()));
}

// Straight transcription of the scoring rule with plain loops.
std::size_t oracle_pick(const Instance& x, double ac, double as, bool mix) {
  const std::size_t d = x.user.size();
  std::vector<double> pref(x.pool.size());
  for (std::size_t k = 0; k < x.pool.size(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double l = mix ? x.lambdas[k] : 0.0;
      s += x.user[j] * (l * x.items(x.positive, j) + (1.0 - l) * x.items(x.pool[k], j));
    }
    pref[k] = s;
  }
  const double lo = *std::min_element(pref.begin(), pref.end());
  const double hi = *std::max_element(pref.begin(), pref.end());
  std::size_t best = 0;
  double best_score = -1e300;
  for (std::size_t k = 0; k < x.pool.size(); ++k) {
    const double norm = hi > lo ? (pref[k] - lo) / (hi - lo) : 0.0;
    const double s = norm + ac * brute_lcp(x.codes.collab[x.positive], x.codes.collab[x.pool[k]]) +
                     as * brute_lcp(x.codes.semantic[x.positive], x.codes.semantic[x.pool[k]]);
    if (s > best_score || (s == best_score && x.pool[k] < x.pool[best])) {
      best = k;
      best_score = s;
    }
  }
  return best;
}

TEST(Mixup, EndpointsAndMidpoint) {
  const std::vector<double> p{1.0, 0.0}, i{0.0, 1.0};
  std::vector<double> out(2);
  Rng rng(1);
  const double lambda = sampler::mixup_embedding(p, i, out, rng);
  EXPECT_GE(lambda, 0.0);
  EXPECT_LT(lambda, 1.0);
  EXPECT_DOUBLE_EQ(out[0], lambda);
  EXPECT_DOUBLE_EQ(out[1], 1.0 - lambda);
  std::vector<double> bad(3);
  EXPECT_THROW(sampler::mixup_embedding(p, i, bad, rng), PreconditionError);
}

TEST(Mixup, ConvexNormBound) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(5), i(5), out(5);
    for (auto& v : p) v = 2.0 * uniform_unit(rng) - 1.0;
    for (auto& v : i) v = 2.0 * uniform_unit(rng) - 1.0;
    sampler::mixup_embedding(p, i, out, rng);
    auto norm = [](const std::vector<double>& v) {
      double s = 0;
      for (double x : v) s += x * x;
      return std::sqrt(s);
    };
    EXPECT_LE(norm(out), std::max(norm(p), norm(i)) + 1e-12);
  }
}

TEST(MinMax, Examples) {
  EXPECT_EQ(sampler::minmax_normalize(std::vector<double>{2, 4, 6}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_EQ(sampler::minmax_normalize(std::vector<double>{5, 5, 5}), (std::vector<double>{0, 0, 0}));
  EXPECT_THROW(sampler::minmax_normalize(std::vector<double>{}), PreconditionError);
}

TEST(MinMax, PreservesOrder) {
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(10);
    for (auto& v : x) v = 10.0 * uniform_unit(rng) - 5.0;
    const auto y = sampler::minmax_normalize(x);
    const auto lo = std::min_element(x.begin(), x.end()) - x.begin();
    const auto hi = std::max_element(x.begin(), x.end()) - x.begin();
    EXPECT_EQ(y[lo], 0.0);
    EXPECT_EQ(y[hi], 1.0);
    for (std::size_t a = 0; a < 10; ++a) {
      for (std::size_t b = 0; b < 10; ++b) {
        if (x[a] < x[b]) EXPECT_LE(y[a], y[b]);
      }
    }
  }
}

TEST(MultiView, WorkedScore) {
  // Two candidates: preferences 0.8 and 1.0 after scaling to a 0..1 range with
  // a third anchor at 0. Candidate 1 then scores 0.8 + 0.1 * 0.5 + 0.3 * 1.0.
  Matrix items(4, 1);
  items(0, 0) = 0.0;  // positive, contributes nothing when lambda = 0
  items(1, 0) = 0.8;
  items(2, 0) = 1.0;
  items(3, 0) = 0.0;
  tree::DualCodes codes;
  codes.collab = {PathCode{{1, 2}}, PathCode{{1, 3}}, PathCode{{0}}, PathCode{{2}}};
  codes.semantic = {PathCode{{4}}, PathCode{{4}}, PathCode{{0}}, PathCode{{1}}};
  const std::vector<double> user{1.0}, lambdas{0.0, 0.0, 0.0};
  const std::vector<ItemId> pool{1, 2, 3};
  const auto hn = sampler::multiview_score(user, 0, pool, items, codes, 0.1, 0.3, lambdas);
  EXPECT_DOUBLE_EQ(hn.pool_scores[0].preference, 0.8);
  EXPECT_DOUBLE_EQ(hn.pool_scores[0].sim_c, 0.5);
  EXPECT_DOUBLE_EQ(hn.pool_scores[0].sim_s, 1.0);
  EXPECT_NEAR(hn.pool_scores[0].total, 1.15, 1e-15);
  EXPECT_EQ(hn.item, 1u);
  EXPECT_EQ(hn.mixed_embedding, std::vector<double>{0.8});
}

TEST(MultiView, MatchesOracleAndDominatesPool) {
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    const auto x = random_instance(rng);
    const double ac = uniform_unit(rng), as = uniform_unit(rng);
    const auto hn = sampler::multiview_score(x.user, x.positive, x.pool, x.items, x.codes, ac, as, x.lambdas);
    const auto k = oracle_pick(x, ac, as, true);
    EXPECT_EQ(hn.item, x.pool[k]);
    EXPECT_EQ(hn.lambda, x.lambdas[k]);
    for (const auto& b : hn.pool_scores) EXPECT_GE(hn.breakdown.total, b.total);
  }
}

TEST(MultiView, ZeroWeightsIsPreferenceArgmax) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_instance(rng);
    const auto hn = sampler::multiview_score(x.user, x.positive, x.pool, x.items, x.codes, 0, 0, x.lambdas);
    EXPECT_EQ(hn.item, x.pool[oracle_pick(x, 0, 0, true)]);
  }
}

TEST(MultiView, ShiftInvariance) {
  // Adding a constant direction orthogonal to everything else shifts every
  // preference by the same amount.
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    auto x = random_instance(rng, 30, 6);
    const auto before = sampler::multiview_score(x.user, x.positive, x.pool, x.items, x.codes, 0.1, 0.3, x.lambdas);
    Matrix wider(x.items.rows(), 7, 1.0);
    for (std::size_t r = 0; r < x.items.rows(); ++r)
      for (std::size_t c = 0; c < 6; ++c) wider(r, c) = x.items(r, c);
    auto user = x.user;
    user.push_back(3.5);
    const auto after = sampler::multiview_score(user, x.positive, x.pool, wider, x.codes, 0.1, 0.3, x.lambdas);
    EXPECT_EQ(before.item, after.item);
  }
}

TEST(MultiView, LargerSemanticWeightNeverLowersSemanticSimilarity) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_instance(rng);
    double prev = -1.0;
    for (double as : {0.0, 0.1, 0.3, 1.0, 3.0}) {
      const auto hn = sampler::multiview_score(x.user, x.positive, x.pool, x.items, x.codes, 0.1, as, x.lambdas);
      EXPECT_GE(hn.breakdown.sim_s, prev);
      prev = hn.breakdown.sim_s;
    }
  }
}

TEST(MultiView, Preconditions) {
  Rng rng(8);
  auto x = random_instance(rng);
  EXPECT_THROW(sampler::multiview_score(x.user, x.positive, {}, x.items, x.codes, 0, 0, std::vector<double>{}),
               PreconditionError);
  x.codes.collab.resize(1);
  x.codes.semantic.resize(1);
  x.positive = 0;
  x.pool = {5};
  EXPECT_THROW(sampler::multiview_score(x.user, 0, x.pool, x.items, x.codes, 0, 0, std::vector<double>{0.5}),
               PreconditionError);
}

TEST(Rns, SingleUnobservedItem) {
  Rng rng(9);
  const std::vector<ItemId> pos{0, 1, 3};
  for (int t = 0; t < 50; ++t) EXPECT_EQ(sampler::sample_rns(pos, 4, rng), 2u);
  const std::vector<ItemId> all{0, 1, 2, 3};
  EXPECT_THROW(sampler::sample_rns(all, 4, rng), PreconditionError);
}

TEST(Rns, UniformOverUnobserved) {
  Rng rng(10);
  const std::vector<ItemId> pos{1, 3, 5, 7};
  std::map<ItemId, int> freq;
  for (int t = 0; t < 1000; ++t) ++freq[sampler::sample_rns(pos, 8, rng)];
  EXPECT_EQ(freq.size(), 4u);
  const double sd = std::sqrt(1000 * 0.25 * 0.75);
  for (auto [item, n] : freq) {
    EXPECT_EQ(item % 2, 0u);
    EXPECT_NEAR(n, 250.0, 4 * sd);
  }
}

TEST(Pool, NeverContainsPositives) {
  Rng rng(11);
  const std::vector<ItemId> pos{0, 2, 4, 6, 8};
  for (int t = 0; t < 200; ++t) {
    for (ItemId i : sampler::draw_pool(pos, 10, 10, rng)) EXPECT_EQ(i % 2, 1u);
  }
}

TEST(Dns, MatchesOracleAndIsMonotone) {
  Rng rng(12);
  for (int t = 0; t < 300; ++t) {
    auto x = random_instance(rng);
    std::size_t best = 0;
    std::vector<double> raw(x.pool.size());
    for (std::size_t k = 0; k < x.pool.size(); ++k) {
      for (std::size_t j = 0; j < x.user.size(); ++j) raw[k] += x.user[j] * x.items(x.pool[k], j);
      if (raw[k] > raw[best] || (raw[k] == raw[best] && x.pool[k] < x.pool[best])) best = k;
    }
    const auto pick = sampler::sample_dns(x.user, x.pool, x.items);
    EXPECT_EQ(pick, x.pool[best]);
    // Move the winner further along the user direction.
    for (std::size_t j = 0; j < x.user.size(); ++j) x.items(pick, j) += 0.5 * x.user[j];
    EXPECT_EQ(sampler::sample_dns(x.user, x.pool, x.items), pick);
  }
}

TEST(DnsPlus, MatchesOracleWithoutMixing) {
  Rng rng(13);
  for (int t = 0; t < 300; ++t) {
    const auto x = random_instance(rng);
    const auto pick = sampler::sample_dns_plus(x.user, x.positive, x.pool, x.items, x.codes, 0.2, 0.4);
    EXPECT_EQ(pick, x.pool[oracle_pick(x, 0.2, 0.4, false)]);
  }
}

TEST(Integration, Composition) {
  const auto plain = sampler::sampler_integration(sampler::Kind::DNS, false, false, 0.1, 0.3);
  EXPECT_EQ(plain.config.kind, sampler::Kind::DNS);
  EXPECT_FALSE(plain.augmented_positives);
  const auto full = sampler::sampler_integration(sampler::Kind::DNS, true, true, 0.1, 0.3);
  EXPECT_EQ(full.config.kind, sampler::Kind::DNSPlus);
  EXPECT_TRUE(full.augmented_positives);
  EXPECT_EQ(full.config.alpha_c, 0.1);
  EXPECT_THROW(sampler::sampler_integration(sampler::Kind::RNS, true, true, 0.1, 0.3), PreconditionError);
}

TEST(Integration, ZeroWeightDualTreeBehavesAsDns) {
  Rng rng(14);
  const auto composed = sampler::sampler_integration(sampler::Kind::DNS, false, true, 0.0, 0.0);
  for (int t = 0; t < 200; ++t) {
    const auto x = random_instance(rng);
    EXPECT_EQ(sampler::sample_dns_plus(x.user, x.positive, x.pool, x.items, x.codes, composed.config.alpha_c,
                                       composed.config.alpha_s),
              sampler::sample_dns(x.user, x.pool, x.items));
  }
}

TEST(SampleNegative, NeverReturnsPositivesForAnyKind) {
  Rng rng(15);
  auto x = random_instance(rng, 12, 4);
  backbone::Embeddings emb{Matrix(1, 4), x.items};
  for (std::size_t j = 0; j < 4; ++j) emb.users(0, j) = x.user[j];
  const std::vector<ItemId> positives{0, 3, 4, 9, 11};
  for (auto kind : {sampler::Kind::RNS, sampler::Kind::DNS, sampler::Kind::MixGCF, sampler::Kind::DTMHNS,
                    sampler::Kind::DNSPlus}) {
    sampler::SamplerConfig cfg;
    cfg.kind = kind;
    for (int t = 0; t < 100; ++t) {
      const auto triple = sampler::sample_negative(cfg, 0, 3, positives, emb, &x.codes, rng);
      EXPECT_FALSE(std::binary_search(positives.begin(), positives.end(), triple.neg));
      EXPECT_EQ(triple.pos, 3u);
      if (kind != sampler::Kind::MixGCF && kind != sampler::Kind::DTMHNS) EXPECT_EQ(triple.lambda, 0.0);
    }
  }
  sampler::SamplerConfig needs_codes;
  EXPECT_THROW(sampler::sample_negative(needs_codes, 0, 3, positives, emb, nullptr, rng), PreconditionError);
}

TEST(Kind, NamesRoundTrip) {
  for (auto kind : {sampler::Kind::RNS, sampler::Kind::DNS, sampler::Kind::MixGCF, sampler::Kind::DTMHNS,
                    sampler::Kind::DNSPlus}) {
    EXPECT_EQ(sampler::parse_kind(sampler::to_string(kind)), kind);
  }
  EXPECT_THROW(sampler::parse_kind("hard"), Error);
}

}  // namespace
