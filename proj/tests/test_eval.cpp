#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "dtlns/eval.hpp"

namespace {

using namespace dtlns;

double brute_recall(const std::vector<ItemId>& topk, const std::set<ItemId>& rel, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < k && r < topk.size(); ++r) hits += rel.count(topk[r]);
  return static_cast<double>(hits) / static_cast<double>(rel.size());
}

double brute_ndcg(const std::vector<ItemId>& topk, const std::set<ItemId>& rel, std::size_t k) {
  double dcg = 0, idcg = 0;
  for (std::size_t r = 1; r <= k && r <= topk.size(); ++r) {
    if (rel.count(topk[r - 1])) dcg += std::log(2.0) / std::log(r + 1.0);
  }
  for (std::size_t r = 1; r <= std::min(k, rel.size()); ++r) idcg += std::log(2.0) / std::log(r + 1.0);
  return dcg / idcg;
}

TEST(Rank, SmallExampleAndMask) {
  const std::vector<double> s{0.9, 0.1, 0.5};
  EXPECT_EQ(eval::rank_items(s, {}, 2), (std::vector<ItemId>{0, 2}));
  const std::vector<ItemId> mask{0};
  EXPECT_EQ(eval::rank_items(s, mask, 2), (std::vector<ItemId>{2, 1}));
}

TEST(Rank, TiesByLowestId) {
  const std::vector<double> s{0.5, 0.7, 0.5, 0.7};
  EXPECT_EQ(eval::rank_items(s, {}, 4), (std::vector<ItemId>{1, 3, 0, 2}));
}

TEST(Rank, MatchesFullSortOracle) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(100);
    // Coarse values so that ties actually occur.
    for (auto& v : s) v = static_cast<double>(uniform_index(rng, 20));
    std::vector<ItemId> mask;
    for (ItemId i = 0; i < 100; ++i) {
      if (uniform_unit(rng) < 0.2) mask.push_back(i);
    }
    std::vector<ItemId> all;
    for (ItemId i = 0; i < 100; ++i) {
      if (!std::binary_search(mask.begin(), mask.end(), i)) all.push_back(i);
    }
    std::stable_sort(all.begin(), all.end(), [&](ItemId a, ItemId b) { return s[a] > s[b]; });
    all.resize(20);
    EXPECT_EQ(eval::rank_items(s, mask, 20), all);
  }
}

TEST(Metrics, HandValues) {
  const std::vector<ItemId> top{5, 3, 9, 1};
  const std::vector<ItemId> two{1, 7};
  EXPECT_DOUBLE_EQ(eval::recall_at_k(top, two, 4), 0.5);
  const std::vector<ItemId> hit{3, 5};
  EXPECT_DOUBLE_EQ(eval::recall_at_k(top, hit, 4), 1.0);
  const std::vector<ItemId> first{5};
  EXPECT_DOUBLE_EQ(eval::ndcg_at_k(top, first, 10), 1.0);
  const std::vector<ItemId> second{3};
  EXPECT_NEAR(eval::ndcg_at_k(top, second, 10), 1.0 / std::log2(3.0), 1e-15);
  EXPECT_NEAR(eval::ndcg_at_k(top, second, 10), 0.6309, 1e-4);
  const std::vector<ItemId> none{42};
  EXPECT_EQ(eval::ndcg_at_k(top, none, 10), 0.0);
  EXPECT_EQ(eval::recall_at_k(top, none, 10), 0.0);
  EXPECT_THROW(eval::recall_at_k(top, {}, 10), PreconditionError);
  EXPECT_THROW(eval::ndcg_at_k(top, {}, 10), PreconditionError);
}

TEST(Metrics, MatchBruteForceOnRandomRankings) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    std::vector<ItemId> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    std::set<ItemId> rel;
    const auto n_rel = 1 + uniform_index(rng, 15);
    while (rel.size() < n_rel) rel.insert(static_cast<ItemId>(uniform_index(rng, 60)));
    const std::vector<ItemId> relv(rel.begin(), rel.end());
    const std::size_t k = 1 + uniform_index(rng, 30);
    perm.resize(k);
    EXPECT_NEAR(eval::recall_at_k(perm, relv, k), brute_recall(perm, rel, k), 1e-12);
    EXPECT_NEAR(eval::ndcg_at_k(perm, relv, k), brute_ndcg(perm, rel, k), 1e-12);
  }
}

TEST(Metrics, Properties) {
  Rng rng(3);
  for (int t = 0; t < 300; ++t) {
    std::vector<ItemId> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm, rng);
    std::set<ItemId> rel;
    while (rel.size() < 5) rel.insert(static_cast<ItemId>(uniform_index(rng, 40)));
    const std::vector<ItemId> relv(rel.begin(), rel.end());
    double prev = 0.0;
    for (std::size_t k = 1; k <= 40; ++k) {
      const double r = eval::recall_at_k(perm, relv, k);
      EXPECT_GE(r, prev);
      prev = r;
      const double n = eval::ndcg_at_k(perm, relv, k);
      EXPECT_GE(n, 0.0);
      EXPECT_LE(n, 1.0 + 1e-15);
    }
    // Promoting a hit past a non-hit never lowers NDCG.
    for (std::size_t r = 1; r < 20; ++r) {
      if (rel.count(perm[r]) && !rel.count(perm[r - 1])) {
        auto better = perm;
        std::swap(better[r], better[r - 1]);
        EXPECT_GE(eval::ndcg_at_k(better, relv, 20), eval::ndcg_at_k(perm, relv, 20));
      }
    }
  }
}

TEST(Metrics, IdealRankingScoresOne) {
  const std::vector<ItemId> rel{2, 4, 8};
  const std::vector<ItemId> top{8, 2, 4, 1, 0};
  EXPECT_NEAR(eval::ndcg_at_k(top, rel, 5), 1.0, 1e-15);
  EXPECT_NEAR(eval::ndcg_at_k(top, rel, 2), 1.0, 1e-15);
}

TEST(Evaluate, MasksTrainAndSkipsEmptyUsers) {
  dataset::InteractionDataset ds;
  ds.user_count = 3;
  ds.item_count = 4;
  ds.train = {{0, 0, {}}, {1, 1, {}}, {2, 2, {}}};
  ds.test = {{0, 1, {}}, {1, 3, {}}};
  ds.reindex();
  // One-dimensional scores: item i scores (4 - i) for every user.
  Matrix users(3, 1, 1.0), items(4, 1);
  for (std::size_t i = 0; i < 4; ++i) items(i, 0) = 4.0 - static_cast<double>(i);
  const std::vector<std::size_t> ks{1, 2};
  const auto r = eval::evaluate(users, items, ds, eval::Split::Test, ks);
  EXPECT_EQ(r.users_evaluated, 2u);
  // User 0: item 0 masked, top-1 is item 1, a hit. User 1: ranking 0, 2, 3.
  EXPECT_DOUBLE_EQ(r.recall.at(1), 0.5);
  EXPECT_DOUBLE_EQ(r.recall.at(2), 0.5);
  EXPECT_DOUBLE_EQ(r.ndcg.at(1), 0.5);
}

}  // namespace
