#include "dtlns/dataset.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace dtlns::dataset {

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_int(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool contains_sorted(const std::vector<ItemId>& v, ItemId x) {
  return std::binary_search(v.begin(), v.end(), x);
}

}  // namespace

bool InteractionDataset::is_train_positive(UserId u, ItemId i) const {
  return u < user_pos.size() && contains_sorted(user_pos[u], i);
}

bool InteractionDataset::is_held_out(UserId u, ItemId i) const {
  const Interaction probe{u, i, std::nullopt};
  return std::binary_search(validation.begin(), validation.end(), probe, PairLess{}) ||
         std::binary_search(test.begin(), test.end(), probe, PairLess{});
}

void InteractionDataset::reindex() {
  std::sort(train.begin(), train.end(), PairLess{});
  std::sort(validation.begin(), validation.end(), PairLess{});
  std::sort(test.begin(), test.end(), PairLess{});
  user_pos = group_by_user(train, user_count);
}

std::vector<std::vector<ItemId>> group_by_user(std::span<const Interaction> edges,
                                               std::size_t user_count) {
  std::vector<std::vector<ItemId>> out(user_count);
  for (const auto& e : edges) out.at(e.user).push_back(e.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

InteractionLog load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open interaction file: " + path.string());

  InteractionLog log;
  std::unordered_map<std::string, UserId> user_index;
  std::unordered_map<std::string, ItemId> item_index;
  std::unordered_map<std::uint64_t, std::size_t> seen;  // (user,item) -> edge index

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("malformed interaction line in " + path.string(), line_no);
    }
    std::optional<std::int64_t> ts;
    if (fields.size() == 3) {
      std::int64_t t = 0;
      if (!parse_int(fields[2], t)) {
        throw ParseError("malformed timestamp in " + path.string(), line_no);
      }
      ts = t;
    }
    auto [uit, unew] = user_index.try_emplace(std::string(fields[0]),
                                              static_cast<UserId>(log.user_ids.size()));
    if (unew) log.user_ids.emplace_back(fields[0]);
    auto [iit, inew] = item_index.try_emplace(std::string(fields[1]),
                                              static_cast<ItemId>(log.item_ids.size()));
    if (inew) log.item_ids.emplace_back(fields[1]);

    const std::uint64_t key = (std::uint64_t{uit->second} << 32) | iit->second;
    auto [sit, fresh] = seen.try_emplace(key, log.edges.size());
    if (fresh) {
      log.edges.push_back({uit->second, iit->second, ts});
    } else if (ts) {
      auto& kept = log.edges[sit->second].timestamp;
      if (!kept || *ts < *kept) kept = ts;
    }
  }
  if (log.edges.empty()) throw Error("interaction file is empty: " + path.string());
  return log;
}

KCoreResult k_core_filter(std::span<const Interaction> edges, std::size_t k) {
  if (k < 1) throw PreconditionError("k_core_filter: k must be >= 1");
  std::size_t users = 0, items = 0;
  for (const auto& e : edges) {
    users = std::max<std::size_t>(users, e.user + 1);
    items = std::max<std::size_t>(items, e.item + 1);
  }
  std::vector<std::vector<std::size_t>> by_user(users), by_item(items);
  for (std::size_t idx = 0; idx < edges.size(); ++idx) {
    by_user[edges[idx].user].push_back(idx);
    by_item[edges[idx].item].push_back(idx);
  }
  std::vector<std::size_t> udeg(users), ideg(items);
  for (std::size_t u = 0; u < users; ++u) udeg[u] = by_user[u].size();
  for (std::size_t i = 0; i < items; ++i) ideg[i] = by_item[i].size();

  std::vector<char> ualive(users, 1), ialive(items, 1), ealive(edges.size(), 1);
  // Queue entries: node id, tagged by side (true = user).
  std::deque<std::pair<bool, std::size_t>> queue;
  for (std::size_t u = 0; u < users; ++u)
    if (udeg[u] < k) queue.emplace_back(true, u);
  for (std::size_t i = 0; i < items; ++i)
    if (ideg[i] < k) queue.emplace_back(false, i);

  while (!queue.empty()) {
    const auto [is_user, node] = queue.front();
    queue.pop_front();
    auto& alive = is_user ? ualive : ialive;
    if (!alive[node]) continue;
    alive[node] = 0;
    for (std::size_t idx : (is_user ? by_user[node] : by_item[node])) {
      if (!ealive[idx]) continue;
      ealive[idx] = 0;
      if (is_user) {
        const auto other = edges[idx].item;
        if (ialive[other] && --ideg[other] < k) queue.emplace_back(false, other);
      } else {
        const auto other = edges[idx].user;
        if (ualive[other] && --udeg[other] < k) queue.emplace_back(true, other);
      }
    }
  }

  KCoreResult out;
  std::vector<UserId> unew(users, 0);
  std::vector<ItemId> inew(items, 0);
  for (std::size_t u = 0; u < users; ++u) {
    if (ualive[u]) {
      unew[u] = static_cast<UserId>(out.user_origin.size());
      out.user_origin.push_back(static_cast<UserId>(u));
    }
  }
  for (std::size_t i = 0; i < items; ++i) {
    if (ialive[i]) {
      inew[i] = static_cast<ItemId>(out.item_origin.size());
      out.item_origin.push_back(static_cast<ItemId>(i));
    }
  }
  for (std::size_t idx = 0; idx < edges.size(); ++idx) {
    if (!ealive[idx]) continue;
    const auto& e = edges[idx];
    out.edges.push_back({unew[e.user], inew[e.item], e.timestamp});
  }
  if (out.edges.empty()) {
    throw Error("dataset eliminated by k-core filtering (k=" + std::to_string(k) + ")");
  }
  return out;
}

InteractionDataset split(std::span<const Interaction> edges, std::size_t user_count,
                         std::size_t item_count, SplitRatios ratios, std::uint64_t seed) {
  const unsigned total = ratios.train + ratios.validation + ratios.test;
  if (total != 10) throw PreconditionError("split: ratios must sum to 10");

  const std::size_t n = edges.size();
  const std::size_t n_val = n * ratios.validation / total;
  const std::size_t n_test = n * ratios.test / total;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  shuffle(order, rng);

  InteractionDataset ds;
  ds.user_count = user_count;
  ds.item_count = item_count;
  for (std::size_t pos = 0; pos < n; ++pos) {
    const auto& e = edges[order[pos]];
    if (e.user >= user_count || e.item >= item_count) {
      throw PreconditionError("split: interaction id out of range");
    }
    if (pos < n_val) {
      ds.validation.push_back(e);
    } else if (pos < n_val + n_test) {
      ds.test.push_back(e);
    } else {
      ds.train.push_back(e);
    }
  }

  std::vector<char> has_train(user_count, 0);
  for (const auto& e : ds.train) has_train[e.user] = 1;
  std::size_t repaired = 0;
  std::vector<char> touched(user_count, 0);
  auto pull_back = [&](std::vector<Interaction>& held) {
    auto keep = std::stable_partition(held.begin(), held.end(),
                                      [&](const Interaction& e) { return has_train[e.user]; });
    for (auto it = keep; it != held.end(); ++it) {
      ds.train.push_back(*it);
      if (!touched[it->user]) {
        touched[it->user] = 1;
        ++repaired;
      }
    }
    held.erase(keep, held.end());
  };
  pull_back(ds.validation);
  pull_back(ds.test);
  if (repaired > 0) {
    spdlog::info("split: moved held-out interactions of {} users without train data back to train",
                 repaired);
  }
  ds.reindex();
  return ds;
}

std::size_t removal_count(const NoiseSpec& spec, std::size_t train_size) {
  if (const auto* count = std::get_if<std::size_t>(&spec.removal)) {
    if (*count >= train_size) {
      throw PreconditionError("inject_false_negatives: removal count must be below |train|");
    }
    return *count;
  }
  const double fraction = std::get<double>(spec.removal);
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw PreconditionError("inject_false_negatives: fraction must lie in (0, 1)");
  }
  return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train_size)));
}

std::pair<InteractionDataset, PlantedFnSet> inject_false_negatives(const InteractionDataset& ds,
                                                                   const NoiseSpec& spec) {
  const std::size_t target = removal_count(spec, ds.train.size());

  std::vector<std::size_t> order(ds.train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(spec.seed);
  shuffle(order, rng);

  std::vector<std::size_t> remaining(ds.user_count, 0);
  for (const auto& e : ds.train) ++remaining[e.user];

  std::vector<char> removed(ds.train.size(), 0);
  std::size_t taken = 0;
  for (std::size_t idx : order) {
    if (taken == target) break;
    const auto u = ds.train[idx].user;
    if (remaining[u] <= 1) continue;  // would empty this user's train set
    --remaining[u];
    removed[idx] = 1;
    ++taken;
  }
  if (taken < target) {
    throw PreconditionError("inject_false_negatives: cannot remove " + std::to_string(target) +
                            " pairs without emptying a user's train set");
  }

  InteractionDataset out = ds;
  out.train.clear();
  PlantedFnSet planted;
  for (std::size_t idx = 0; idx < ds.train.size(); ++idx) {
    (removed[idx] ? planted.pairs : out.train).push_back(ds.train[idx]);
  }
  std::sort(planted.pairs.begin(), planted.pairs.end(), PairLess{});
  out.reindex();
  return {std::move(out), std::move(planted)};
}

AugmentResult augment_with_positives(const InteractionDataset& ds,
                                     const std::map<UserId, std::vector<ItemId>>& detected) {
  AugmentResult result{ds, {}};
  auto& out = result.dataset;
  for (const auto& [u, items] : detected) {
    if (u >= ds.user_count) throw PreconditionError("augment: user id out of range");
    std::vector<ItemId> unique = items;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    for (ItemId i : unique) {
      if (i >= ds.item_count) throw PreconditionError("augment: item id out of range");
      ++result.audit.requested;
      if (ds.is_held_out(u, i)) {
        ++result.audit.leakage_filtered;
      } else if (ds.is_train_positive(u, i)) {
        ++result.audit.already_present;
      } else {
        out.train.push_back({u, i, std::nullopt});
        ++result.audit.added;
      }
    }
  }
  out.reindex();
  return result;
}

void write_pairs(const std::filesystem::path& path, std::span<const Interaction> edges) {
  std::vector<Interaction> sorted(edges.begin(), edges.end());
  std::sort(sorted.begin(), sorted.end(), PairLess{});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& e : sorted) {
    out << e.user << '\t' << e.item;
    if (e.timestamp) out << '\t' << *e.timestamp;
    out << '\n';
  }
}

std::vector<Interaction> read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<Interaction> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    Interaction e;
    if (fields.size() < 2 || fields.size() > 3 || !parse_int(fields[0], e.user) ||
        !parse_int(fields[1], e.item)) {
      throw ParseError("malformed pair line in " + path.string(), line_no);
    }
    if (fields.size() == 3) {
      std::int64_t t = 0;
      if (!parse_int(fields[2], t)) throw ParseError("malformed timestamp in " + path.string(), line_no);
      e.timestamp = t;
    }
    edges.push_back(e);
  }
  return edges;
}

void write_splits(const std::filesystem::path& dir, const InteractionDataset& ds) {
  std::filesystem::create_directories(dir);
  write_pairs(dir / "train.tsv", ds.train);
  write_pairs(dir / "valid.tsv", ds.validation);
  write_pairs(dir / "test.tsv", ds.test);
}

InteractionDataset read_splits(const std::filesystem::path& dir, std::size_t user_count,
                               std::size_t item_count) {
  InteractionDataset ds;
  ds.user_count = user_count;
  ds.item_count = item_count;
  ds.train = read_pairs(dir / "train.tsv");
  ds.validation = read_pairs(dir / "valid.tsv");
  ds.test = read_pairs(dir / "test.tsv");
  for (const auto* part : {&ds.train, &ds.validation, &ds.test}) {
    for (const auto& e : *part) {
      if (e.user >= user_count || e.item >= item_count) {
        throw Error("split file id out of range in " + dir.string());
      }
    }
  }
  ds.reindex();
  return ds;
}

void write_id_table(const std::filesystem::path& path, std::span<const std::string> ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
}

}  // namespace dtlns::dataset
