#include "dtlns/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <spdlog/spdlog.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <thread>

#include "dtlns/backbone.hpp"
#include "dtlns/dataset.hpp"
#include "dtlns/spectral.hpp"
#include "dtlns/train.hpp"
#include "dtlns/tree.hpp"

namespace dtlns::pipeline {

using nlohmann::json;
using config::RunConfig;
using config::Stage;

std::string_view name(Command c) {
  switch (c) {
    case Command::Prepare: return "prepare";
    case Command::BuildTrees: return "build-trees";
    case Command::IdentifyFn: return "identify-fn";
    case Command::Train: return "train";
    case Command::Evaluate: return "evaluate";
    case Command::FnAccuracy: return "fn-accuracy";
  }
  return "?";
}

int stage_exit_code(Command c) { return exit_code::kFirstStage + static_cast<int>(c); }

RunLock::RunLock(const fs::path& out) : path_(out / ".lock") {
  fs::create_directories(out);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) {
      throw LockError("run directory is locked by another writer (" + path_.string() +
                      "); remove the file if no other process is running");
    }
    throw Error("cannot create lock " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing artifact " + path.string() + " (run the upstream stage first)");
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error("corrupt JSON in " + path.string());
  return j;
}

struct Layout {
  fs::path root;
  fs::path data() const { return root / "data"; }
  fs::path pretrain() const { return root / "pretrain"; }
  fs::path trees() const { return root / "trees"; }
  fs::path fni() const { return root / "fni"; }
  fs::path train() const { return root / "train"; }
  fs::path seed_dir(std::uint64_t s) const { return train() / ("seed_" + std::to_string(s)); }
  fs::path accuracy() const { return root / "fn_accuracy"; }
};

// Manifest of an upstream stage, checked against the current config.
json require_manifest(const fs::path& dir, const RunConfig& cfg, Stage stage) {
  auto m = read_json(dir / "manifest.json");
  const auto expected = config::fingerprint(cfg, stage);
  const auto found = m.value("fingerprint", std::string());
  if (found != expected) {
    throw FingerprintError("config fingerprint mismatch for " + dir.string() + ": artifact has " +
                           found + ", config gives " + expected);
  }
  return m;
}

void begin_stage_dir(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", config::serialize(cfg));
}

dataset::InteractionDataset load_dataset(const RunConfig& cfg, const Layout& at) {
  const auto m = require_manifest(at.data(), cfg, Stage::Prepare);
  return dataset::read_splits(at.data(), m.at("user_count").get<std::size_t>(),
                              m.at("item_count").get<std::size_t>());
}

// Train set the recommender is trained and masked on: FNI-augmented when a
// binding is configured.
dataset::InteractionDataset load_training_dataset(const RunConfig& cfg, const Layout& at) {
  auto ds = load_dataset(cfg, at);
  if (cfg.fni != config::FniBinding::Off) {
    require_manifest(at.fni(), cfg, Stage::Fni);
    ds.train = dataset::read_pairs(at.fni() / "train.tsv");
    ds.reindex();
  }
  return ds;
}

backbone::ModelState load_pretrained(const RunConfig& cfg, const Layout& at) {
  require_manifest(at.pretrain(), cfg, Stage::Pretrain);
  return backbone::load_checkpoint(at.pretrain() / "model.bin");
}

tree::DualCodes load_codes(const RunConfig& cfg, const Layout& at) {
  require_manifest(at.trees(), cfg, Stage::Trees);
  return tree::read_codes(at.trees() / "codes.tsv");
}

std::string fmt_metric(double v) {
  if (v < 0.0) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

class EpochCsv {
 public:
  explicit EpochCsv(const fs::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot write " + path.string());
    out_ << "epoch,loss,recall@20,ndcg@20,seconds,sampling_seconds\n";
  }
  void operator()(const train::EpochLog& e) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", e.loss);
    out_ << e.epoch << ',' << buf << ',' << fmt_metric(e.recall20) << ',' << fmt_metric(e.ndcg20)
         << ',';
    std::snprintf(buf, sizeof buf, "%.4f,%.4f", e.seconds, e.sampling_seconds);
    out_ << buf << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

json epoch_summary(const train::TrainResult& r) {
  double secs = 0.0, sampling = 0.0;
  for (const auto& e : r.log) {
    secs += e.seconds;
    sampling += e.sampling_seconds;
  }
  const double n = r.log.empty() ? 1.0 : static_cast<double>(r.log.size());
  return {{"epochs_run", r.log.size()},
          {"best_epoch", r.best_epoch},
          {"best_valid_recall@20", r.best_recall20},
          {"mean_epoch_seconds", secs / n},
          {"mean_sampling_seconds", sampling / n}};
}

std::unique_ptr<fni::Classifier> make_classifier(const RunConfig& cfg, const tree::DualCodes& codes) {
  switch (cfg.fni) {
    case config::FniBinding::Rule: return fni::make_rule_classifier(codes, cfg.rule_top_n);
    case config::FniBinding::Mock:
      if (cfg.mock_script.empty()) throw Error("fni.binding = mock needs fni.mock_script");
      return fni::make_mock_classifier(fni::read_mock_script(cfg.mock_script));
    case config::FniBinding::Llm: return fni::make_http_classifier(cfg.endpoint);
    case config::FniBinding::Off: break;
  }
  throw Error("fni.binding is off; nothing to identify");
}

std::size_t classifier_concurrency(const RunConfig& cfg) {
  if (cfg.fni == config::FniBinding::Llm) return cfg.endpoint.concurrency;
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<fni::FnPrompt> build_prompts(const RunConfig& cfg, const dataset::InteractionDataset& ds,
                                         const tree::DualCodes& codes,
                                         const std::vector<fni::CandidateSet>& cands) {
  std::vector<fni::FnPrompt> prompts;
  std::size_t skipped = 0;
  for (const auto& cs : cands) {
    if (cs.items.empty()) continue;
    const auto history = fni::prompt_history(ds, cs.user);
    if (history.empty()) {
      ++skipped;
      continue;
    }
    prompts.push_back(fni::build_prompt(cs.user, codes, history, cs, cfg.history));
  }
  if (skipped > 0) spdlog::warn("fni: {} users without train history skipped", skipped);
  return prompts;
}

struct Classified {
  std::vector<fni::FnPrompt> prompts;
  std::vector<fni::ClassifyOutcome> outcomes;
  std::string provenance;
  double seconds = 0.0;
};

Classified classify(const RunConfig& cfg, const dataset::InteractionDataset& ds,
                    const tree::DualCodes& codes, const std::vector<fni::CandidateSet>& cands) {
  Classified out;
  out.prompts = build_prompts(cfg, ds, codes, cands);
  auto classifier = make_classifier(cfg, codes);
  out.provenance = classifier->provenance();
  const auto t0 = Clock::now();
  out.outcomes = fni::classify_all(*classifier, out.prompts, classifier_concurrency(cfg));
  out.seconds = seconds_since(t0);
  spdlog::info("fni: classified {} users with {} in {:.2f} s", out.prompts.size(), out.provenance,
               out.seconds);
  return out;
}

void write_detected(const fs::path& path, const fni::FnReport& report) {
  std::vector<dataset::Interaction> pairs;
  for (const auto& [u, items] : report.detected) {
    for (ItemId i : items) pairs.push_back({u, i, {}});
  }
  dataset::write_pairs(path, pairs);
}

std::string sampler_label(const RunConfig& cfg) {
  auto s = sampler::to_string(cfg.sampler.kind);
  if (cfg.fni != config::FniBinding::Off) s += "+fni:" + config::to_string(cfg.fni);
  return s;
}

json metrics_json(const eval::MetricReport& r) {
  json j = {{"users_evaluated", r.users_evaluated}};
  for (const auto& [k, v] : r.recall) j["recall@" + std::to_string(k)] = v;
  for (const auto& [k, v] : r.ndcg) j["ndcg@" + std::to_string(k)] = v;
  return j;
}

eval::MetricReport evaluate_state(const backbone::ModelState& state,
                                  const dataset::InteractionDataset& ds, const RunConfig& cfg) {
  if (state.user_emb.rows() != ds.user_count || state.item_emb.rows() != ds.item_count) {
    throw Error("checkpoint shape does not match the dataset");
  }
  const auto emb = backbone::propagate(state, backbone::build_graph(ds));
  return eval::evaluate(emb.users, emb.items, ds, eval::Split::Test, cfg.ks);
}

// Rebuilds results.csv and aggregate.json from every seed directory trained
// under the current config.
void write_results(const RunConfig& cfg, const Layout& at) {
  struct Row {
    std::uint64_t seed;
    json metrics;
  };
  std::vector<Row> rows;
  const auto fp = config::fingerprint(cfg, Stage::Train);
  if (fs::exists(at.train())) {
    for (const auto& entry : fs::directory_iterator(at.train())) {
      const auto metrics_path = entry.path() / "test_metrics.json";
      if (!entry.is_directory() || !fs::exists(metrics_path)) continue;
      const auto m = read_json(entry.path() / "manifest.json");
      if (m.value("fingerprint", std::string()) != fp) continue;
      rows.push_back({m.at("seed").get<std::uint64_t>(), read_json(metrics_path)});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.seed < b.seed; });

  std::vector<std::string> cols;
  for (std::size_t k : cfg.ks) {
    cols.push_back("recall@" + std::to_string(k));
    cols.push_back("ndcg@" + std::to_string(k));
  }
  std::string csv = "run_id,dataset,sampler,seed";
  for (const auto& c : cols) csv += "," + c;
  csv += "\n";
  const auto dataset_name = cfg.input.stem().string();
  for (const auto& r : rows) {
    csv += fp + "-s" + std::to_string(r.seed) + "," + dataset_name + "," + sampler_label(cfg) + "," +
           std::to_string(r.seed);
    for (const auto& c : cols) {
      char buf[32];
      std::snprintf(buf, sizeof buf, ",%.6f", r.metrics.at(c).get<double>());
      csv += buf;
    }
    csv += "\n";
  }
  write_text(at.train() / "results.csv", csv);

  json mean = json::object(), stdev = json::object();
  for (const auto& c : cols) {
    double sum = 0.0, sq = 0.0;
    for (const auto& r : rows) sum += r.metrics.at(c).get<double>();
    const double n = static_cast<double>(rows.size());
    const double mu = rows.empty() ? 0.0 : sum / n;
    for (const auto& r : rows) sq += std::pow(r.metrics.at(c).get<double>() - mu, 2);
    mean[c] = mu;
    stdev[c] = rows.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  }
  write_json(at.train() / "aggregate.json", {{"fingerprint", fp},
                                             {"dataset", dataset_name},
                                             {"sampler", sampler_label(cfg)},
                                             {"runs", rows.size()},
                                             {"mean", mean},
                                             {"std", stdev}});
}

void train_pretrained(const RunConfig& cfg, const Layout& at, const dataset::InteractionDataset& ds) {
  begin_stage_dir(at.pretrain(), cfg);
  backbone::TrainConfig tc = cfg.train;
  tc.epochs = cfg.pretrain_epochs;
  tc.seed = cfg.pretrain_seed;
  EpochCsv log(at.pretrain() / "log.csv");
  const auto t0 = Clock::now();
  const auto result =
      train::pretrain_semantic(ds, cfg.backbone, cfg.layers, cfg.dim, tc, std::ref(log));
  backbone::save_checkpoint(at.pretrain() / "model.bin", result.training.best);
  auto m = epoch_summary(result.training);
  m["fingerprint"] = config::fingerprint(cfg, Stage::Pretrain);
  m["backbone"] = backbone::to_string(cfg.backbone);
  m["dim"] = cfg.dim;
  m["seconds"] = seconds_since(t0);
  write_json(at.pretrain() / "manifest.json", m);
  spdlog::info("pretrain: best epoch {} valid recall@20 {:.4f}", result.training.best_epoch,
               result.training.best_recall20);
}

}  // namespace

void cmd_prepare(const RunConfig& cfg, const fs::path& out) {
  const Layout at{out};
  if (cfg.input.empty()) throw Error("data.input is not set");
  const auto log = dataset::load_interactions(cfg.input);
  const auto core = dataset::k_core_filter(log.edges, cfg.kcore);
  const std::size_t users = core.user_origin.size();
  const std::size_t items = core.item_origin.size();
  auto ds = dataset::split(core.edges, users, items, {}, cfg.split_seed);

  begin_stage_dir(at.data(), cfg);
  json m = {{"raw_interactions", log.edges.size()},
            {"kcore", cfg.kcore},
            {"split_seed", cfg.split_seed},
            {"user_count", users},
            {"item_count", items}};
  if (cfg.noise_count > 0 || cfg.noise_fraction > 0.0) {
    dataset::NoiseSpec spec;
    spec.seed = cfg.noise_seed;
    if (cfg.noise_count > 0) spec.removal = cfg.noise_count;
    else spec.removal = cfg.noise_fraction;
    auto [noisy, planted] = dataset::inject_false_negatives(ds, spec);
    ds = std::move(noisy);
    dataset::write_pairs(at.data() / "planted_fn.tsv", planted.pairs);
    m["planted"] = planted.pairs.size();
    m["noise_seed"] = cfg.noise_seed;
  } else {
    std::error_code ec;
    fs::remove(at.data() / "planted_fn.tsv", ec);
  }
  dataset::write_splits(at.data(), ds);

  std::vector<std::string> user_ids(users), item_ids(items);
  for (std::size_t u = 0; u < users; ++u) user_ids[u] = log.user_ids[core.user_origin[u]];
  for (std::size_t i = 0; i < items; ++i) item_ids[i] = log.item_ids[core.item_origin[i]];
  dataset::write_id_table(at.data() / "users.tsv", user_ids);
  dataset::write_id_table(at.data() / "items.tsv", item_ids);

  m["train"] = ds.train.size();
  m["validation"] = ds.validation.size();
  m["test"] = ds.test.size();
  m["fingerprint"] = config::fingerprint(cfg, Stage::Prepare);
  write_json(at.data() / "manifest.json", m);
  spdlog::info("prepare: {} users, {} items, {}/{}/{} train/valid/test", users, items,
               ds.train.size(), ds.validation.size(), ds.test.size());
}

void cmd_build_trees(const RunConfig& cfg, const fs::path& out) {
  const Layout at{out};
  const auto ds = load_dataset(cfg, at);
  if (!fs::exists(at.pretrain() / "manifest.json")) train_pretrained(cfg, at, ds);
  const auto pretrained = load_pretrained(cfg, at);
  const auto semantic = backbone::propagate(pretrained, backbone::build_graph(ds)).items;

  const auto t0 = Clock::now();
  const auto lap = spectral::normalized_laplacian(spectral::jaccard_similarity(ds));
  spectral::SpectralOptions opt;
  opt.dim = cfg.spectral_dim;
  opt.tol = cfg.spectral_tol;
  opt.seed = cfg.tree_seed;
  opt.solver = cfg.solver;
  const auto emb = spectral::spectral_embed(lap, opt);

  const auto collab_tree =
      tree::build_kary_tree(emb.vectors, cfg.branching, cfg.leaf_size, mix_seed(cfg.tree_seed, 1));
  const auto semantic_tree =
      tree::build_kary_tree(semantic, cfg.branching, cfg.leaf_size, mix_seed(cfg.tree_seed, 2));
  const tree::DualCodes codes{tree::path_codes(collab_tree), tree::path_codes(semantic_tree)};

  begin_stage_dir(at.trees(), cfg);
  tree::write_tree(at.trees() / "collab_tree.txt", collab_tree);
  tree::write_tree(at.trees() / "semantic_tree.txt", semantic_tree);
  tree::write_codes(at.trees() / "codes.tsv", codes);
  json m = {{"fingerprint", config::fingerprint(cfg, Stage::Trees)},
            {"branching", cfg.branching},
            {"leaf_size", cfg.leaf_size},
            {"spectral_dim", cfg.spectral_dim},
            {"item_count", ds.item_count},
            {"eigenvalues", emb.eigenvalues},
            {"skipped_trivial", emb.skipped_trivial},
            {"used_lanczos", emb.used_lanczos},
            {"collab_depth", collab_tree.depth()},
            {"collab_leaves", collab_tree.leaf_count()},
            {"semantic_depth", semantic_tree.depth()},
            {"semantic_leaves", semantic_tree.leaf_count()},
            {"seconds", seconds_since(t0)}};
  write_json(at.trees() / "manifest.json", m);
  spdlog::info("build-trees: collab depth {} ({} leaves), semantic depth {} ({} leaves)",
               collab_tree.depth(), collab_tree.leaf_count(), semantic_tree.depth(),
               semantic_tree.leaf_count());
}

fni::FnReport cmd_identify_fn(const RunConfig& cfg, const fs::path& out) {
  const Layout at{out};
  const auto ds = load_dataset(cfg, at);
  const auto pretrained = load_pretrained(cfg, at);
  const auto codes = load_codes(cfg, at);
  const auto emb = backbone::propagate(pretrained, backbone::build_graph(ds));
  const auto cands = fni::build_candidate_sets(emb, ds, cfg.candidates);

  auto run = classify(cfg, ds, codes, cands);
  auto [augmented, report] = fni::collect_and_augment(run.prompts, run.outcomes, ds, run.provenance);
  report.classifier_seconds = run.seconds;

  begin_stage_dir(at.fni(), cfg);
  dataset::write_pairs(at.fni() / "train.tsv", augmented.train);
  write_detected(at.fni() / "detected.tsv", report);
  write_json(at.fni() / "report.json", report.to_json());
  write_json(at.fni() / "manifest.json", {{"fingerprint", config::fingerprint(cfg, Stage::Fni)},
                                          {"train", augmented.train.size()},
                                          {"added", report.audit.added}});
  spdlog::info("identify-fn: {} detected, {} added, {} leakage-filtered, {} failed users",
               report.detected_count, report.audit.added, report.audit.leakage_filtered,
               report.failed_users);
  return report;
}

void cmd_train(const RunConfig& cfg, const fs::path& out) {
  const Layout at{out};
  const auto ds = load_training_dataset(cfg, at);
  std::optional<tree::DualCodes> codes;
  if (cfg.sampler.uses_codes()) codes = load_codes(cfg, at);
  const auto fp = config::fingerprint(cfg, Stage::Train);

  for (std::uint64_t seed : cfg.seeds) {
    const auto dir = at.seed_dir(seed);
    begin_stage_dir(dir, cfg);
    backbone::TrainConfig tc = cfg.train;
    tc.seed = seed;
    auto init = backbone::init_params(ds.user_count, ds.item_count, cfg.dim, cfg.backbone, cfg.layers,
                                      seed);
    EpochCsv log(dir / "log.csv");
    auto dump = [&](const backbone::ModelState& s) {
      backbone::save_checkpoint(dir / "diverged.bin", s);
      spdlog::error("train: non-finite values, state dumped to {}", (dir / "diverged.bin").string());
    };
    const auto t0 = Clock::now();
    const auto result = train::fit(ds, std::move(init), tc, cfg.sampler, codes ? &*codes : nullptr,
                                   std::ref(log), dump);
    backbone::save_checkpoint(dir / "model.bin", result.best);
    const auto report = evaluate_state(result.best, ds, cfg);
    write_json(dir / "test_metrics.json", metrics_json(report));
    auto m = epoch_summary(result);
    m["fingerprint"] = fp;
    m["seed"] = seed;
    m["sampler"] = sampler_label(cfg);
    m["seconds"] = seconds_since(t0);
    write_json(dir / "manifest.json", m);
    spdlog::info("train: seed {} best epoch {} test recall@20 {:.4f}", seed, result.best_epoch,
                 report.recall.count(20) ? report.recall.at(20) : -1.0);
  }
  write_results(cfg, at);
}

void cmd_evaluate(const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& checkpoint) {
  const Layout at{out};
  const auto ds = load_training_dataset(cfg, at);
  if (checkpoint) {
    if (!fs::exists(*checkpoint)) throw Error("checkpoint not found: " + checkpoint->string());
    const auto report = evaluate_state(backbone::load_checkpoint(*checkpoint), ds, cfg);
    const auto dir = out / "evaluate";
    fs::create_directories(dir);
    auto j = metrics_json(report);
    j["checkpoint"] = checkpoint->string();
    write_json(dir / (checkpoint->stem().string() + "_metrics.json"), j);
    return;
  }
  std::size_t evaluated = 0;
  for (std::uint64_t seed : cfg.seeds) {
    const auto dir = at.seed_dir(seed);
    require_manifest(dir, cfg, Stage::Train);
    const auto path = dir / "model.bin";
    if (!fs::exists(path)) throw Error("checkpoint not found: " + path.string());
    const auto report = evaluate_state(backbone::load_checkpoint(path), ds, cfg);
    write_json(dir / "test_metrics.json", metrics_json(report));
    ++evaluated;
  }
  write_results(cfg, at);
  spdlog::info("evaluate: {} checkpoints", evaluated);
}

fni::AccuracyReport cmd_fn_accuracy(const RunConfig& cfg, const fs::path& out) {
  const Layout at{out};
  const auto ds = load_dataset(cfg, at);
  const auto planted_path = at.data() / "planted_fn.tsv";
  if (!fs::exists(planted_path)) {
    throw Error("no planted false negatives; set data.noise_fraction or data.noise_count");
  }
  const dataset::PlantedFnSet planted{dataset::read_pairs(planted_path)};
  const auto pretrained = load_pretrained(cfg, at);
  const auto codes = load_codes(cfg, at);
  const auto emb = backbone::propagate(pretrained, backbone::build_graph(ds));
  const auto cands = fni::build_probe_candidate_sets(emb, ds, planted, cfg.candidates);

  auto run = classify(cfg, ds, codes, cands);
  auto [augmented, report] = fni::collect_and_augment(run.prompts, run.outcomes, ds, run.provenance);
  report.classifier_seconds = run.seconds;
  const auto acc = fni::fn_accuracy(report, planted, cands);

  begin_stage_dir(at.accuracy(), cfg);
  write_json(at.accuracy() / "report.json", report.to_json());
  auto j = acc.to_json();
  j["fingerprint"] = config::fingerprint(cfg, Stage::Fni);
  j["provenance"] = report.provenance;
  write_json(at.accuracy() / "accuracy.json", j);
  if (acc.defined) {
    spdlog::info("fn-accuracy: recall {:.4f} precision {:.4f} random baseline {:.4f}", acc.recall,
                 acc.precision, acc.random_baseline);
  }
  return acc;
}

int run(Command c, const RunConfig& cfg, const fs::path& out, const std::optional<fs::path>& checkpoint) {
  std::optional<RunLock> lock;
  try {
    lock.emplace(out);
  } catch (const LockError& e) {
    spdlog::error("{}", e.what());
    return exit_code::kLocked;
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", name(c), e.what());
    return stage_exit_code(c);
  }
  try {
    switch (c) {
      case Command::Prepare: cmd_prepare(cfg, out); break;
      case Command::BuildTrees: cmd_build_trees(cfg, out); break;
      case Command::IdentifyFn: cmd_identify_fn(cfg, out); break;
      case Command::Train: cmd_train(cfg, out); break;
      case Command::Evaluate: cmd_evaluate(cfg, out, checkpoint); break;
      case Command::FnAccuracy: cmd_fn_accuracy(cfg, out); break;
    }
  } catch (const std::exception& e) {
    spdlog::error("{} failed: {}", name(c), e.what());
    return stage_exit_code(c);
  }
  return exit_code::kOk;
}

}  // namespace dtlns::pipeline
