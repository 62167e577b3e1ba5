#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "dtlns/backbone.hpp"
#include "dtlns/dataset.hpp"
#include "dtlns/eval.hpp"
#include "dtlns/sampler.hpp"
#include "dtlns/tree.hpp"

namespace dtlns::train {

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double recall20 = -1.0;  // -1 when the epoch was not evaluated
  double ndcg20 = -1.0;
  double seconds = 0.0;           // wall-clock for the whole epoch
  double sampling_seconds = 0.0;  // part spent selecting negatives
};

struct TrainResult {
  backbone::ModelState best;  // state with the best validation Recall@20
  std::size_t best_epoch = 0;
  double best_recall20 = 0.0;
  std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;
// Receives the diverged state before the NumericError propagates.
using DivergeCallback = std::function<void(const backbone::ModelState&)>;

/// Mini-batch BPR training over the train split of `ds` with negatives chosen
/// by `sampler`. Validation Recall@20 drives checkpoint selection and early
/// stopping.
TrainResult fit(const dataset::InteractionDataset& ds, backbone::ModelState init,
                const backbone::TrainConfig& cfg, const sampler::SamplerConfig& sampler,
                const tree::DualCodes* codes = nullptr, const EpochCallback& on_epoch = {},
                const DivergeCallback& on_diverge = {});

struct PretrainResult {
  TrainResult training;
  Matrix item_embeddings;  // propagated, item_count x dim
};

/// Trains the backbone with uniform negatives and returns propagated item
/// embeddings for the semantic tree. The trained state doubles as the
/// candidate-ranking model.
PretrainResult pretrain_semantic(const dataset::InteractionDataset& ds, backbone::Kind kind,
                                 std::size_t layers, std::size_t dim,
                                 const backbone::TrainConfig& cfg,
                                 const EpochCallback& on_epoch = {});

}  // namespace dtlns::train
