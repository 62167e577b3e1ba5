#include "dtlns/fni.hpp"

#include <spdlog/spdlog.h>

#include "httplib.h"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "dtlns/eval.hpp"
#include "dtlns/simd/kernels.hpp"

namespace dtlns::fni {

namespace {

using Clock = std::chrono::steady_clock;

// Items ranked by score for one user, train positives and `skip` excluded.
std::vector<ItemId> ranked_unobserved(const backbone::Embeddings& emb,
                                      const dataset::InteractionDataset& ds, UserId u,
                                      std::span<const ItemId> skip, std::size_t limit) {
  std::vector<double> scores(ds.item_count);
  const auto uv = emb.users.row(u);
  for (std::size_t i = 0; i < ds.item_count; ++i) {
    scores[i] = simd::dot(uv, emb.items.row(static_cast<ItemId>(i)));
  }
  std::vector<ItemId> masked(ds.user_pos[u].begin(), ds.user_pos[u].end());
  masked.insert(masked.end(), skip.begin(), skip.end());
  std::sort(masked.begin(), masked.end());
  return eval::rank_items(scores, masked, limit);
}

void check_embeddings(const backbone::Embeddings& emb, const dataset::InteractionDataset& ds) {
  if (emb.users.rows() != ds.user_count || emb.items.rows() != ds.item_count) {
    throw PreconditionError("candidate sets: embedding shape does not match the dataset");
  }
}

void append_item(std::string& out, ItemId i, const tree::DualCodes& codes) {
  out += "item ";
  out += std::to_string(i);
  out += " c:";
  out += tree::format_code(codes.collab[i]);
  out += " s:";
  out += tree::format_code(codes.semantic[i]);
  out += '\n';
}

// End of the bracketed span starting at `open`, honouring JSON strings.
std::optional<std::size_t> matching_bracket(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t k = open; k < text.size(); ++k) {
    const char c = text[k];
    if (in_string) {
      if (c == '\\') ++k;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[') ++depth;
    else if (c == ']' && --depth == 0) return k;
  }
  return std::nullopt;
}

std::optional<nlohmann::json> first_json_array(std::string_view text) {
  for (std::size_t open = text.find('['); open != std::string_view::npos;
       open = text.find('[', open + 1)) {
    const auto close = matching_bracket(text, open);
    if (!close) continue;
    auto parsed = nlohmann::json::parse(text.substr(open, *close - open + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_array()) return parsed;
  }
  return std::nullopt;
}

std::optional<std::int64_t> item_id_of(const nlohmann::json& v) {
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_unsigned()) return static_cast<std::int64_t>(v.get<std::uint64_t>());
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      try {
        return std::stoll(s);
      } catch (const std::out_of_range&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

std::optional<Label> label_of(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (text == "positive") return Label::Positive;
  if (text == "negative") return Label::Negative;
  return std::nullopt;
}

ClassifyOutcome all_negative(const std::vector<ItemId>& candidates) {
  ClassifyOutcome out;
  out.verdicts.reserve(candidates.size());
  for (ItemId i : candidates) out.verdicts.push_back({i, Label::Negative});
  return out;
}

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("endpoint url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

class HttpClassifier final : public Classifier {
 public:
  explicit HttpClassifier(EndpointConfig cfg) : cfg_(std::move(cfg)), url_(parse_url(cfg_.url)) {
    if (const char* tok = std::getenv(cfg_.token_env.c_str()); tok && *tok) token_ = tok;
  }

  std::string provenance() const override { return "http:" + cfg_.url + " model=" + cfg_.model; }

  ClassifyOutcome classify(const FnPrompt& prompt) override {
    const std::string body = chat_request(prompt, cfg_).dump();
    httplib::Client client(url_.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    std::string last_error;
    for (std::size_t attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff * (1LL << (attempt - 1)));
      auto res = client.Post(url_.path, headers, body, "application/json");
      if (!res) {
        last_error = "transport: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 200) {
        auto out = parse_verdicts(response_content(res->body), prompt.candidates);
        if (out.parse_gaps > 0 || out.unknown_items > 0 || out.salvaged) {
          spdlog::warn("fni: user {} response: {} gaps, {} unknown ids{}", prompt.user,
                       out.parse_gaps, out.unknown_items, out.salvaged ? ", salvaged" : "");
        }
        return out;
      }
      last_error = "status " + std::to_string(res->status);
      if (res->status != 429 && res->status < 500) break;  // not transient
    }
    spdlog::warn("fni: user {} request failed: {}", prompt.user, last_error);
    auto out = all_negative(prompt.candidates);
    out.failed = true;
    out.error = last_error;
    return out;
  }

 private:
  EndpointConfig cfg_;
  ParsedUrl url_;
  std::string token_;
};

class RuleClassifier final : public Classifier {
 public:
  RuleClassifier(const tree::DualCodes& codes, std::size_t top_n) : codes_(codes), top_n_(top_n) {}

  std::string provenance() const override { return "rule:top" + std::to_string(top_n_); }

  ClassifyOutcome classify(const FnPrompt& prompt) override {
    const auto picked = rule_fni(codes_, prompt.history, prompt.candidates, top_n_);
    auto out = all_negative(prompt.candidates);
    for (auto& v : out.verdicts) {
      if (std::binary_search(picked.begin(), picked.end(), v.item)) v.label = Label::Positive;
    }
    return out;
  }

 private:
  tree::DualCodes codes_;
  std::size_t top_n_;
};

class MockClassifier final : public Classifier {
 public:
  explicit MockClassifier(std::map<UserId, std::vector<ItemId>> positives)
      : positives_(std::move(positives)) {}

  std::string provenance() const override { return "mock"; }

  ClassifyOutcome classify(const FnPrompt& prompt) override {
    auto out = all_negative(prompt.candidates);
    const auto it = positives_.find(prompt.user);
    if (it == positives_.end()) return out;
    for (ItemId i : it->second) {
      auto v = std::find_if(out.verdicts.begin(), out.verdicts.end(),
                            [&](const Verdict& x) { return x.item == i; });
      if (v == out.verdicts.end()) ++out.unknown_items;
      else v->label = Label::Positive;
    }
    return out;
  }

 private:
  std::map<UserId, std::vector<ItemId>> positives_;
};

}  // namespace

std::vector<CandidateSet> build_candidate_sets(const backbone::Embeddings& pretrained,
                                               const dataset::InteractionDataset& ds,
                                               std::size_t limit) {
  if (limit == 0) throw PreconditionError("build_candidate_sets: limit must be positive");
  check_embeddings(pretrained, ds);
  std::vector<CandidateSet> out(ds.user_count);
  std::size_t short_sets = 0;
  for (std::size_t u = 0; u < ds.user_count; ++u) {
    out[u].user = static_cast<UserId>(u);
    out[u].items = ranked_unobserved(pretrained, ds, static_cast<UserId>(u), {}, limit);
    if (out[u].items.size() < limit) ++short_sets;
  }
  if (short_sets > 0) {
    spdlog::info("fni: {} users have fewer than {} unobserved items", short_sets, limit);
  }
  return out;
}

std::vector<CandidateSet> build_probe_candidate_sets(const backbone::Embeddings& pretrained,
                                                     const dataset::InteractionDataset& ds,
                                                     const dataset::PlantedFnSet& planted,
                                                     std::size_t limit) {
  if (limit == 0) throw PreconditionError("build_probe_candidate_sets: limit must be positive");
  check_embeddings(pretrained, ds);
  const auto by_user = dataset::group_by_user(planted.pairs, ds.user_count);
  std::vector<CandidateSet> out(ds.user_count);
  for (std::size_t u = 0; u < ds.user_count; ++u) {
    auto& cs = out[u];
    cs.user = static_cast<UserId>(u);
    for (ItemId i : by_user[u]) {
      if (cs.items.size() == limit) break;
      if (!ds.is_train_positive(cs.user, i)) cs.items.push_back(i);
    }
    std::vector<ItemId> taken = cs.items;
    std::sort(taken.begin(), taken.end());
    const auto fill = ranked_unobserved(pretrained, ds, cs.user, taken, limit - cs.items.size());
    cs.items.insert(cs.items.end(), fill.begin(), fill.end());
  }
  return out;
}

std::vector<ItemId> prompt_history(const dataset::InteractionDataset& ds, UserId u) {
  if (u >= ds.user_count) throw PreconditionError("prompt_history: user out of range");
  std::vector<const dataset::Interaction*> rows;
  const auto lo = std::lower_bound(ds.train.begin(), ds.train.end(), dataset::Interaction{u, 0, {}},
                                   dataset::PairLess{});
  for (auto it = lo; it != ds.train.end() && it->user == u; ++it) rows.push_back(&*it);
  // Timestamped rows first, newest first; the rest by ascending id.
  std::stable_sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) {
    if (a->timestamp.has_value() != b->timestamp.has_value()) return a->timestamp.has_value();
    if (a->timestamp && *a->timestamp != *b->timestamp) return *a->timestamp > *b->timestamp;
    return a->item < b->item;
  });
  std::vector<ItemId> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back(r->item);
  return out;
}

const std::string& system_prompt() {
  static const std::string text =
      "You help a recommender system find items a user would like but has never interacted "
      "with.\n"
      "Items are described only by two path codes. The c: code locates an item in a tree built "
      "from co-interaction structure and the s: code locates it in a tree built from learned "
      "item representations. A code lists child indices from the root to the item's leaf, so "
      "items whose codes share a longer prefix are more alike.\n"
      "You receive the user's history and a list of candidate items. For every candidate, "
      "answer positive if its codes are close to the history and the user would probably like "
      "it, otherwise answer negative.\n"
      "Reply with one JSON array and nothing else. Give one element per candidate in the form "
      "{\"item_id\": <int>, \"label\": \"positive\"} or "
      "{\"item_id\": <int>, \"label\": \"negative\"}.\n";
  return text;
}

FnPrompt build_prompt(UserId u, const tree::DualCodes& codes, const std::vector<ItemId>& history,
                      const CandidateSet& candidates, std::size_t truncate) {
  if (history.empty()) throw PreconditionError("build_prompt: user has no history");
  FnPrompt p;
  p.user = u;
  p.system_text = system_prompt();
  p.history.assign(history.begin(),
                   history.begin() + static_cast<std::ptrdiff_t>(std::min(truncate, history.size())));
  p.candidates = candidates.items;

  const auto n = std::min(codes.collab.size(), codes.semantic.size());
  auto covered = [&](ItemId i) { return i < n; };
  if (!std::all_of(p.history.begin(), p.history.end(), covered) ||
      !std::all_of(p.candidates.begin(), p.candidates.end(), covered)) {
    throw PreconditionError("build_prompt: path codes missing for a referenced item");
  }

  std::string& s = p.user_payload;
  s += "user " + std::to_string(u) + "\n";
  s += "history (" + std::to_string(p.history.size()) + " items):\n";
  for (ItemId i : p.history) append_item(s, i, codes);
  s += "candidates (" + std::to_string(p.candidates.size()) + " items):\n";
  for (ItemId i : p.candidates) append_item(s, i, codes);
  return p;
}

ClassifyOutcome parse_verdicts(std::string_view text, const std::vector<ItemId>& candidates) {
  std::map<ItemId, Label> seen;
  std::size_t unknown = 0;
  bool salvaged = false;
  auto record = [&](std::int64_t id, Label label) {
    const bool prompted =
        id >= 0 && std::find(candidates.begin(), candidates.end(), static_cast<ItemId>(id)) !=
                       candidates.end();
    if (!prompted) {
      ++unknown;
      return;
    }
    seen.emplace(static_cast<ItemId>(id), label);  // first verdict for an item wins
  };

  if (const auto arr = first_json_array(text)) {
    for (const auto& el : *arr) {
      if (!el.is_object() || !el.contains("item_id") || !el.contains("label")) continue;
      const auto id = item_id_of(el["item_id"]);
      if (!id || !el["label"].is_string()) continue;
      if (const auto label = label_of(el["label"].get<std::string>())) record(*id, *label);
    }
  } else {
    salvaged = true;
    static const std::regex pattern(
        R"re("item_id"\s*:\s*"?(\d+)"?[^}]*?"label"\s*:\s*"(positive|negative)")re",
        std::regex::icase);
    const std::string copy(text);
    for (std::sregex_iterator it(copy.begin(), copy.end(), pattern), end; it != end; ++it) {
      std::int64_t id = -1;
      try {
        id = std::stoll((*it)[1].str());
      } catch (const std::out_of_range&) {
      }
      record(id, *label_of((*it)[2].str()));
    }
  }

  ClassifyOutcome out = all_negative(candidates);
  out.unknown_items = unknown;
  out.salvaged = salvaged;
  for (auto& v : out.verdicts) {
    const auto it = seen.find(v.item);
    if (it == seen.end()) ++out.parse_gaps;
    else v.label = it->second;
  }
  return out;
}

nlohmann::json chat_request(const FnPrompt& prompt, const EndpointConfig& cfg) {
  return {{"model", cfg.model},
          {"messages",
           nlohmann::json::array({{{"role", "system"}, {"content", prompt.system_text}},
                                  {{"role", "user"}, {"content", prompt.user_payload}}})},
          {"temperature", cfg.temperature}};
}

std::string response_content(std::string_view body) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::string(body);
  const auto choices = j.find("choices");
  if (choices == j.end() || !choices->is_array() || choices->empty()) return std::string(body);
  const auto& first = (*choices)[0];
  if (!first.is_object() || !first.contains("message")) return std::string(body);
  const auto& msg = first["message"];
  if (!msg.is_object() || !msg.contains("content") || !msg["content"].is_string()) {
    return std::string(body);
  }
  return msg["content"].get<std::string>();
}

std::unique_ptr<Classifier> make_http_classifier(EndpointConfig cfg) {
  return std::make_unique<HttpClassifier>(std::move(cfg));
}

std::unique_ptr<Classifier> make_rule_classifier(const tree::DualCodes& codes, std::size_t top_n) {
  if (top_n == 0) throw PreconditionError("rule classifier: top_n must be positive");
  return std::make_unique<RuleClassifier>(codes, top_n);
}

std::unique_ptr<Classifier> make_mock_classifier(std::map<UserId, std::vector<ItemId>> positives) {
  return std::make_unique<MockClassifier>(std::move(positives));
}

std::map<UserId, std::vector<ItemId>> read_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open mock script " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ParseError("mock script must be a JSON object of user -> [items]", 0);
  }
  std::map<UserId, std::vector<ItemId>> out;
  for (const auto& [key, items] : j.items()) {
    if (!items.is_array()) throw ParseError("mock script entry for user " + key + " is not an array", 0);
    auto& v = out[static_cast<UserId>(std::stoul(key))];
    for (const auto& i : items) v.push_back(i.get<ItemId>());
  }
  return out;
}

std::vector<ItemId> rule_fni(const tree::DualCodes& codes, const std::vector<ItemId>& history,
                             const std::vector<ItemId>& candidates, std::size_t top_n) {
  if (top_n == 0) throw PreconditionError("rule_fni: top_n must be positive");
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(candidates.size());
  for (ItemId i : candidates) {
    double s = 0.0;
    for (ItemId j : history) {
      s += tree::lcp_similarity(codes.collab[i], codes.collab[j]) +
           tree::lcp_similarity(codes.semantic[i], codes.semantic[j]);
    }
    scored.emplace_back(s, i);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  std::vector<ItemId> out;
  for (std::size_t k = 0; k < std::min(top_n, scored.size()); ++k) out.push_back(scored[k].second);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<ClassifyOutcome> classify_all(Classifier& classifier,
                                          const std::vector<FnPrompt>& prompts,
                                          std::size_t concurrency) {
  std::vector<ClassifyOutcome> out(prompts.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < prompts.size(); k = next++) {
      try {
        out[k] = classifier.classify(prompts[k]);
      } catch (const std::exception& e) {
        spdlog::warn("fni: classifier failed for user {}: {}", prompts[k].user, e.what());
        out[k] = all_negative(prompts[k].candidates);
        out[k].failed = true;
        out[k].error = e.what();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(concurrency, 1, std::max<std::size_t>(1, prompts.size()));
  if (n == 1) {
    worker();
    return out;
  }
  std::vector<std::thread> pool;
  pool.reserve(n);
  for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  return out;
}

nlohmann::json FnReport::to_json() const {
  nlohmann::json det = nlohmann::json::object();
  for (const auto& [u, items] : detected) det[std::to_string(u)] = items;
  return {{"provenance", provenance},
          {"users_prompted", users_prompted},
          {"candidates_prompted", candidates_prompted},
          {"detected", detected_count},
          {"added", audit.added},
          {"leakage_filtered", audit.leakage_filtered},
          {"already_present", audit.already_present},
          {"parse_gaps", parse_gaps},
          {"unknown_items", unknown_items},
          {"failed_users", failed_users},
          {"classifier_seconds", classifier_seconds},
          {"detected_by_user", det}};
}

std::pair<dataset::InteractionDataset, FnReport> collect_and_augment(
    const std::vector<FnPrompt>& prompts, const std::vector<ClassifyOutcome>& outcomes,
    const dataset::InteractionDataset& ds, std::string provenance) {
  if (prompts.size() != outcomes.size()) {
    throw PreconditionError("collect_and_augment: one outcome per prompt required");
  }
  FnReport report;
  report.provenance = std::move(provenance);
  for (std::size_t k = 0; k < prompts.size(); ++k) {
    const auto& p = prompts[k];
    const auto& o = outcomes[k];
    ++report.users_prompted;
    report.candidates_prompted += p.candidates.size();
    report.parse_gaps += o.parse_gaps;
    report.unknown_items += o.unknown_items;
    if (o.failed) ++report.failed_users;
    for (const auto& v : o.verdicts) {
      if (v.label != Label::Positive) continue;
      if (std::find(p.candidates.begin(), p.candidates.end(), v.item) == p.candidates.end()) {
        throw PreconditionError("collect_and_augment: verdict for an item that was not prompted");
      }
      report.detected[p.user].push_back(v.item);
    }
  }
  for (auto it = report.detected.begin(); it != report.detected.end();) {
    auto& items = it->second;
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    report.detected_count += items.size();
    it = items.empty() ? report.detected.erase(it) : std::next(it);
  }
  auto aug = dataset::augment_with_positives(ds, report.detected);
  report.audit = aug.audit;
  return {std::move(aug.dataset), std::move(report)};
}

nlohmann::json AccuracyReport::to_json() const {
  nlohmann::json j = {{"planted_in_candidates", planted_in_candidates},
                      {"detections", detections},
                      {"true_detections", true_detections},
                      {"defined", defined}};
  if (defined) {
    j["recall"] = recall;
    j["precision"] = precision;
    j["random_baseline"] = random_baseline;
  } else {
    j["recall"] = nullptr;
    j["precision"] = nullptr;
    j["random_baseline"] = nullptr;
  }
  return j;
}

AccuracyReport fn_accuracy(const FnReport& report, const dataset::PlantedFnSet& planted,
                           const std::vector<CandidateSet>& candidates) {
  std::map<UserId, std::set<ItemId>> planted_by_user;
  for (const auto& e : planted.pairs) planted_by_user[e.user].insert(e.item);

  AccuracyReport out;
  double expected_hits = 0.0;
  for (const auto& cs : candidates) {
    const auto pit = planted_by_user.find(cs.user);
    const auto dit = report.detected.find(cs.user);
    const std::size_t det = dit == report.detected.end() ? 0 : dit->second.size();
    out.detections += det;
    if (dit != report.detected.end() && pit != planted_by_user.end()) {
      for (ItemId i : dit->second) out.true_detections += pit->second.count(i);
    }
    if (pit == planted_by_user.end() || cs.items.empty()) continue;
    std::size_t in_cand = 0;
    for (ItemId i : cs.items) in_cand += pit->second.count(i);
    out.planted_in_candidates += in_cand;
    // A uniform pick of `det` out of |C_u| catches each planted item with
    // probability det / |C_u|.
    const double pick = static_cast<double>(std::min(det, cs.items.size()));
    expected_hits += static_cast<double>(in_cand) * pick / static_cast<double>(cs.items.size());
  }
  out.defined = out.planted_in_candidates > 0;
  if (!out.defined) {
    spdlog::warn("fn_accuracy: no planted pair appears in any candidate set; metrics undefined");
    return out;
  }
  const double planted_n = static_cast<double>(out.planted_in_candidates);
  out.recall = static_cast<double>(out.true_detections) / planted_n;
  out.precision = out.detections == 0
                      ? 0.0
                      : static_cast<double>(out.true_detections) / static_cast<double>(out.detections);
  out.random_baseline = expected_hits / planted_n;
  return out;
}

}  // namespace dtlns::fni
