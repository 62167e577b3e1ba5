#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "dtlns/common.hpp"
#include "dtlns/dataset.hpp"

namespace dtlns::eval {

/// Top-k item ids by descending score, ties by lowest id. Items listed in
/// `masked` (sorted) are excluded.
std::vector<ItemId> rank_items(std::span<const double> scores, std::span<const ItemId> masked,
                               std::size_t k);

/// |topk ∩ relevant| / |relevant|; `relevant` must be sorted and non-empty.
double recall_at_k(std::span<const ItemId> topk, std::span<const ItemId> relevant, std::size_t k);

/// Binary-relevance NDCG with 1-based log2(rank + 1) discount.
double ndcg_at_k(std::span<const ItemId> topk, std::span<const ItemId> relevant, std::size_t k);

struct MetricReport {
  std::map<std::size_t, double> recall;
  std::map<std::size_t, double> ndcg;
  std::size_t users_evaluated = 0;
};

enum class Split { Validation, Test };

/// Full-ranking evaluation: every item is scored for every user with a
/// non-empty held-out set, the user's train positives are masked.
MetricReport evaluate(const Matrix& user_emb, const Matrix& item_emb,
                      const dataset::InteractionDataset& ds, Split split,
                      std::span<const std::size_t> ks);

}  // namespace dtlns::eval
