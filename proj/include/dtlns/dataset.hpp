#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dtlns/common.hpp"

namespace dtlns::dataset {

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::optional<std::int64_t> timestamp;

  friend bool operator==(const Interaction& a, const Interaction& b) {
    return a.user == b.user && a.item == b.item;
  }
};

// Orders by (user, item); timestamps do not participate.
struct PairLess {
  bool operator()(const Interaction& a, const Interaction& b) const {
    return a.user != b.user ? a.user < b.user : a.item < b.item;
  }
};

/// Interactions with dense ids plus the tables mapping them back to raw ids.
struct InteractionLog {
  std::vector<Interaction> edges;
  std::vector<std::string> user_ids;  // dense id -> raw id
  std::vector<std::string> item_ids;
};

struct InteractionDataset {
  std::size_t user_count = 0;
  std::size_t item_count = 0;
  std::vector<Interaction> train;  // sorted by PairLess
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  std::vector<std::vector<ItemId>> user_pos;  // sorted train items per user

  bool is_train_positive(UserId u, ItemId i) const;
  bool is_held_out(UserId u, ItemId i) const;  // in validation or test

  /// Rebuilds user_pos from train and sorts all three splits.
  void reindex();
};

/// Items grouped per user for a split, each list sorted.
std::vector<std::vector<ItemId>> group_by_user(std::span<const Interaction> edges,
                                               std::size_t user_count);

/// Reads `user<TAB>item[<TAB>timestamp]` lines. Raw ids are remapped to dense
/// ids in order of first appearance; duplicate pairs keep the earliest timestamp.
InteractionLog load_interactions(const std::filesystem::path& path);

struct KCoreResult {
  std::vector<Interaction> edges;  // re-densified ids
  std::vector<UserId> user_origin;  // new id -> id in the input
  std::vector<ItemId> item_origin;
};

/// Iteratively prunes users and items with fewer than k interactions until
/// every remaining degree is at least k. Throws if nothing survives.
KCoreResult k_core_filter(std::span<const Interaction> edges, std::size_t k);

struct SplitRatios {
  unsigned train = 8;
  unsigned validation = 1;
  unsigned test = 1;
};

/// Global random split of interactions. Held-out sizes are floor(n * r / 10);
/// train receives the remainder. Users left without train interactions get
/// their held-out interactions moved back to train.
InteractionDataset split(std::span<const Interaction> edges, std::size_t user_count,
                         std::size_t item_count, SplitRatios ratios, std::uint64_t seed);

struct NoiseSpec {
  std::variant<std::size_t, double> removal;  // absolute count or fraction of train
  std::uint64_t seed = 0;
};

struct PlantedFnSet {
  std::vector<Interaction> pairs;  // sorted by PairLess
};

/// Number of train pairs the spec asks to remove.
std::size_t removal_count(const NoiseSpec& spec, std::size_t train_size);

/// Removes train positives to simulate false negatives. Never empties a
/// user's train set.
std::pair<InteractionDataset, PlantedFnSet> inject_false_negatives(const InteractionDataset& ds,
                                                                   const NoiseSpec& spec);

struct AugmentAudit {
  std::size_t requested = 0;
  std::size_t added = 0;
  std::size_t leakage_filtered = 0;
  std::size_t already_present = 0;
};

struct AugmentResult {
  InteractionDataset dataset;
  AugmentAudit audit;
};

/// Adds detected pairs to train, skipping pairs already in train and pairs
/// held out for validation or test.
AugmentResult augment_with_positives(const InteractionDataset& ds,
                                     const std::map<UserId, std::vector<ItemId>>& detected);

// Persistence: train.tsv / valid.tsv / test.tsv with dense ids.
void write_pairs(const std::filesystem::path& path, std::span<const Interaction> edges);
std::vector<Interaction> read_pairs(const std::filesystem::path& path);

void write_splits(const std::filesystem::path& dir, const InteractionDataset& ds);
InteractionDataset read_splits(const std::filesystem::path& dir, std::size_t user_count,
                               std::size_t item_count);

void write_id_table(const std::filesystem::path& path, std::span<const std::string> ids);

}  // namespace dtlns::dataset
