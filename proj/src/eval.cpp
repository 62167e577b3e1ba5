#include "dtlns/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dtlns/simd/kernels.hpp"

namespace dtlns::eval {

std::vector<ItemId> rank_items(std::span<const double> scores, std::span<const ItemId> masked,
                               std::size_t k) {
  std::vector<ItemId> ids;
  ids.reserve(scores.size());
  std::size_t mi = 0;
  for (ItemId i = 0; i < scores.size(); ++i) {
    while (mi < masked.size() && masked[mi] < i) ++mi;
    if (mi < masked.size() && masked[mi] == i) continue;
    ids.push_back(i);
  }
  k = std::min(k, ids.size());
  auto better = [&](ItemId a, ItemId b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  return ids;
}

double recall_at_k(std::span<const ItemId> topk, std::span<const ItemId> relevant, std::size_t k) {
  if (relevant.empty()) throw PreconditionError("recall_at_k: empty relevant set");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < std::min(k, topk.size()); ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const ItemId> topk, std::span<const ItemId> relevant, std::size_t k) {
  if (relevant.empty()) throw PreconditionError("ndcg_at_k: empty relevant set");
  double dcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, topk.size()); ++r) {
    if (std::binary_search(relevant.begin(), relevant.end(), topk[r])) {
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
  }
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) {
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  }
  return dcg / idcg;
}

MetricReport evaluate(const Matrix& user_emb, const Matrix& item_emb,
                      const dataset::InteractionDataset& ds, Split split,
                      std::span<const std::size_t> ks) {
  const auto& held = split == Split::Test ? ds.test : ds.validation;
  const auto relevant = dataset::group_by_user(held, ds.user_count);
  const std::size_t kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());

  MetricReport report;
  for (auto k : ks) {
    report.recall[k] = 0.0;
    report.ndcg[k] = 0.0;
  }
  std::vector<double> scores(ds.item_count);
  const auto& kernels = simd::active();
  for (UserId u = 0; u < ds.user_count; ++u) {
    if (relevant[u].empty()) continue;
    kernels.dot_rows(item_emb.values().data(), ds.item_count, user_emb.row(u).data(),
                     scores.data(), item_emb.cols());
    const auto top = rank_items(scores, ds.user_pos[u], kmax);
    for (auto k : ks) {
      report.recall[k] += recall_at_k(top, relevant[u], k);
      report.ndcg[k] += ndcg_at_k(top, relevant[u], k);
    }
    ++report.users_evaluated;
  }
  if (report.users_evaluated > 0) {
    const auto n = static_cast<double>(report.users_evaluated);
    for (auto& [k, v] : report.recall) v /= n;
    for (auto& [k, v] : report.ndcg) v /= n;
  }
  return report;
}

}  // namespace dtlns::eval
