#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dtlns/backbone.hpp"
#include "dtlns/dataset.hpp"
#include "dtlns/tree.hpp"

namespace dtlns::fni {

struct CandidateSet {
  UserId user = 0;
  std::vector<ItemId> items;  // ranked by pretrained score, descending
};

/// Top-`limit` items per user by pretrained score, excluding the user's train
/// positives. Ties break by lowest item id.
std::vector<CandidateSet> build_candidate_sets(const backbone::Embeddings& pretrained,
                                               const dataset::InteractionDataset& ds,
                                               std::size_t limit);

/// Candidate sets that start with the user's planted pairs (capped at
/// `limit`) and are filled up with the highest-scoring remaining items.
std::vector<CandidateSet> build_probe_candidate_sets(const backbone::Embeddings& pretrained,
                                                     const dataset::InteractionDataset& ds,
                                                     const dataset::PlantedFnSet& planted,
                                                     std::size_t limit);

/// History items in prompt order: most recent first when timestamps exist,
/// then ascending id.
std::vector<ItemId> prompt_history(const dataset::InteractionDataset& ds, UserId u);

/// System instructions sent with every request.
const std::string& system_prompt();

struct FnPrompt {
  UserId user = 0;
  std::string system_text;
  std::string user_payload;
  std::vector<ItemId> history;     // after truncation
  std::vector<ItemId> candidates;
};

/// One prompt per user covering all of its candidates. `history` is taken in
/// the given order and truncated to `truncate` entries.
FnPrompt build_prompt(UserId u, const tree::DualCodes& codes, const std::vector<ItemId>& history,
                      const CandidateSet& candidates, std::size_t truncate);

enum class Label { Positive, Negative };

struct Verdict {
  ItemId item = 0;
  Label label = Label::Negative;
};

struct ClassifyOutcome {
  std::vector<Verdict> verdicts;  // one per prompted candidate, prompt order
  std::size_t parse_gaps = 0;     // candidates defaulted to negative
  std::size_t unknown_items = 0;  // ids in the response that were never prompted
  bool salvaged = false;          // response needed regex salvage
  bool failed = false;            // request failed after all retries
  std::string error;
};

/// Reads verdicts from free text: the first JSON array of
/// {"item_id": int, "label": "positive"|"negative"} objects, with a regex
/// fallback for malformed JSON. Missing candidates default to negative.
ClassifyOutcome parse_verdicts(std::string_view text, const std::vector<ItemId>& candidates);

class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual std::string provenance() const = 0;
  /// Must be safe to call concurrently for different prompts.
  virtual ClassifyOutcome classify(const FnPrompt& prompt) = 0;
};

struct EndpointConfig {
  std::string url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "llama3-8b";
  std::string token_env = "DTLNS_LLM_TOKEN";
  std::size_t concurrency = 8;
  std::chrono::milliseconds timeout{60000};
  std::size_t max_retries = 3;
  std::chrono::milliseconds backoff{200};
  double temperature = 0.0;

  bool operator==(const EndpointConfig&) const = default;
};

/// Chat-completion request body for a prompt.
nlohmann::json chat_request(const FnPrompt& prompt, const EndpointConfig& cfg);

/// Text of choices[0].message.content from a chat-completion response, or the
/// raw body when it is not of that shape.
std::string response_content(std::string_view body);

std::unique_ptr<Classifier> make_http_classifier(EndpointConfig cfg);

/// Shared-prefix heuristic: each candidate is scored by the summed
/// collaborative and semantic LCP similarity to the history; the `top_n`
/// best are labelled positive.
std::unique_ptr<Classifier> make_rule_classifier(const tree::DualCodes& codes, std::size_t top_n);

/// Replays scripted verdicts: user -> items labelled positive.
std::unique_ptr<Classifier> make_mock_classifier(std::map<UserId, std::vector<ItemId>> positives);
std::map<UserId, std::vector<ItemId>> read_mock_script(const std::filesystem::path& path);

/// The rule itself, returned as a set sorted by item id.
std::vector<ItemId> rule_fni(const tree::DualCodes& codes, const std::vector<ItemId>& history,
                             const std::vector<ItemId>& candidates, std::size_t top_n);

/// Runs `classifier` over all prompts with up to `concurrency` in flight.
std::vector<ClassifyOutcome> classify_all(Classifier& classifier,
                                          const std::vector<FnPrompt>& prompts,
                                          std::size_t concurrency);

struct FnReport {
  std::string provenance;
  std::map<UserId, std::vector<ItemId>> detected;  // P-hat per user, sorted
  std::size_t users_prompted = 0;
  std::size_t candidates_prompted = 0;
  std::size_t detected_count = 0;
  dataset::AugmentAudit audit;
  std::size_t parse_gaps = 0;
  std::size_t unknown_items = 0;
  std::size_t failed_users = 0;
  double classifier_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Collects positively labelled candidates and adds them to train behind the
/// leakage guard.
std::pair<dataset::InteractionDataset, FnReport> collect_and_augment(
    const std::vector<FnPrompt>& prompts, const std::vector<ClassifyOutcome>& outcomes,
    const dataset::InteractionDataset& ds, std::string provenance);

struct AccuracyReport {
  std::size_t planted_in_candidates = 0;
  std::size_t detections = 0;
  std::size_t true_detections = 0;
  double recall = 0.0;
  double precision = 0.0;
  double random_baseline = 0.0;  // expected recall of a same-size uniform pick
  bool defined = false;

  nlohmann::json to_json() const;
};

AccuracyReport fn_accuracy(const FnReport& report, const dataset::PlantedFnSet& planted,
                           const std::vector<CandidateSet>& candidates);

}  // namespace dtlns::fni
