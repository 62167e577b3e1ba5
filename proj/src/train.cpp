#include "dtlns/train.hpp"

#include <spdlog/spdlog.h>

#include <chrono>

namespace dtlns::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

TrainResult fit(const dataset::InteractionDataset& ds, backbone::ModelState init,
                const backbone::TrainConfig& cfg, const sampler::SamplerConfig& sampler,
                const tree::DualCodes* codes, const EpochCallback& on_epoch,
                const DivergeCallback& on_diverge) {
  if (ds.train.empty()) throw PreconditionError("fit: empty train set");
  if (cfg.batch_size == 0) throw PreconditionError("fit: batch size must be positive");
  if (sampler.uses_codes() && !codes) throw PreconditionError("fit: sampler needs dual-tree codes");

  const auto graph = backbone::build_graph(ds);
  constexpr std::size_t kTopK[] = {20};

  TrainResult result;
  result.best = init;
  backbone::ModelState state = std::move(init);

  auto validate = [&](std::size_t epoch, EpochLog& entry) -> bool {
    const auto emb = backbone::propagate(state, graph);
    const auto report = eval::evaluate(emb.users, emb.items, ds, eval::Split::Validation, kTopK);
    entry.recall20 = report.recall.at(20);
    entry.ndcg20 = report.ndcg.at(20);
    if (epoch == 0 || entry.recall20 > result.best_recall20) {
      result.best_recall20 = entry.recall20;
      result.best_epoch = epoch;
      result.best = state;
      return true;
    }
    return false;
  };

  {
    EpochLog entry;
    validate(0, entry);
  }

  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<backbone::Triple> batch;
  std::size_t stale_rounds = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    Rng rng(mix_seed(cfg.seed, epoch));
    shuffle(order, rng);

    EpochLog entry;
    entry.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const auto emb = backbone::propagate(state, graph);
      const auto ts = Clock::now();
      Rng batch_rng(mix_seed(mix_seed(cfg.seed, epoch), batches + 1));
      batch.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto& e = ds.train[order[k]];
        batch.push_back(sampler::sample_negative(sampler, e.user, e.item, ds.user_pos[e.user], emb,
                                                 codes, batch_rng));
      }
      entry.sampling_seconds += seconds_since(ts);
      try {
        loss_sum += backbone::bpr_step(state, graph, batch, cfg, &emb);
      } catch (const NumericError&) {
        if (on_diverge) on_diverge(state);
        throw;
      }
      ++batches;
    }
    entry.loss = loss_sum / static_cast<double>(batches);
    if (!backbone::all_finite(state)) {
      if (on_diverge) on_diverge(state);
      throw NumericError("fit: non-finite parameters after epoch " + std::to_string(epoch));
    }

    bool stop = false;
    if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0) {
      if (validate(epoch, entry)) {
        stale_rounds = 0;
      } else if (cfg.patience > 0 && ++stale_rounds >= cfg.patience) {
        stop = true;
      }
    }
    entry.seconds = seconds_since(t0);
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (stop) {
      spdlog::debug("fit: early stop at epoch {} (best epoch {})", epoch, result.best_epoch);
      break;
    }
  }
  return result;
}

PretrainResult pretrain_semantic(const dataset::InteractionDataset& ds, backbone::Kind kind,
                                 std::size_t layers, std::size_t dim,
                                 const backbone::TrainConfig& cfg, const EpochCallback& on_epoch) {
  auto init = backbone::init_params(ds.user_count, ds.item_count, dim, kind, layers, cfg.seed);
  sampler::SamplerConfig rns;
  rns.kind = sampler::Kind::RNS;
  PretrainResult out;
  out.training = fit(ds, std::move(init), cfg, rns, nullptr, on_epoch);
  const auto graph = backbone::build_graph(ds);
  out.item_embeddings = backbone::propagate(out.training.best, graph).items;
  return out;
}

}  // namespace dtlns::train
