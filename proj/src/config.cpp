#include "dtlns/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dtlns::config {

std::string to_string(FniBinding b) {
  switch (b) {
    case FniBinding::Off: return "off";
    case FniBinding::Rule: return "rule";
    case FniBinding::Llm: return "llm";
    case FniBinding::Mock: return "mock";
  }
  return "?";
}

FniBinding parse_binding(std::string_view text) {
  if (text == "off") return FniBinding::Off;
  if (text == "rule") return FniBinding::Rule;
  if (text == "llm") return FniBinding::Llm;
  if (text == "mock") return FniBinding::Mock;
  throw Error("unknown fni binding: " + std::string(text));
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Shortest decimal that reads back to the same double.
std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

template <typename T>
T to_uint(std::string_view s) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw Error("expected a non-negative integer, got '" + std::string(s) + "'");
  }
  return v;
}

double to_double(std::string_view s) {
  const std::string copy(s);
  char* end = nullptr;
  const double v = std::strtod(copy.c_str(), &end);
  if (copy.empty() || end != copy.c_str() + copy.size()) {
    throw Error("expected a number, got '" + copy + "'");
  }
  return v;
}

template <typename T>
std::vector<T> to_list(std::string_view s) {
  std::vector<T> out;
  while (!s.empty()) {
    const auto comma = s.find(',');
    out.push_back(to_uint<T>(trim(s.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.empty()) throw Error("expected a comma-separated list");
  return out;
}

template <typename T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += ',';
    out += std::to_string(v[k]);
  }
  return out;
}

std::string solver_name(spectral::Solver s) {
  switch (s) {
    case spectral::Solver::Auto: return "auto";
    case spectral::Solver::Dense: return "dense";
    case spectral::Solver::Lanczos: return "lanczos";
  }
  return "?";
}

spectral::Solver parse_solver(std::string_view s) {
  if (s == "auto") return spectral::Solver::Auto;
  if (s == "dense") return spectral::Solver::Dense;
  if (s == "lanczos") return spectral::Solver::Lanczos;
  throw Error("unknown solver: " + std::string(s));
}

struct Field {
  const char* key;
  std::optional<Stage> stage;  // nullopt: operational only, not fingerprinted
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

#define DTLNS_UINT(KEY, STAGE, MEMBER)                                              \
  Field {                                                                           \
    KEY, STAGE, [](const RunConfig& c) { return std::to_string(c.MEMBER); },       \
        [](RunConfig& c, std::string_view v) {                                      \
          c.MEMBER = to_uint<std::decay_t<decltype(c.MEMBER)>>(v);                  \
        }                                                                           \
  }
#define DTLNS_REAL(KEY, STAGE, MEMBER)                                              \
  Field {                                                                           \
    KEY, STAGE, [](const RunConfig& c) { return fmt_double(c.MEMBER); },           \
        [](RunConfig& c, std::string_view v) { c.MEMBER = to_double(v); }           \
  }
#define DTLNS_TEXT(KEY, STAGE, MEMBER)                                              \
  Field {                                                                           \
    KEY, STAGE, [](const RunConfig& c) { return std::string(c.MEMBER); },          \
        [](RunConfig& c, std::string_view v) { c.MEMBER = std::string(v); }         \
  }
#define DTLNS_PATH(KEY, STAGE, MEMBER)                                              \
  Field {                                                                           \
    KEY, STAGE, [](const RunConfig& c) { return c.MEMBER.string(); },              \
        [](RunConfig& c, std::string_view v) { c.MEMBER = std::string(v); }         \
  }

const std::vector<Field>& fields() {
  using S = Stage;
  static const std::vector<Field> table = {
      DTLNS_PATH("data.input", S::Prepare, input),
      DTLNS_UINT("data.kcore", S::Prepare, kcore),
      DTLNS_UINT("data.split_seed", S::Prepare, split_seed),
      DTLNS_REAL("data.noise_fraction", S::Prepare, noise_fraction),
      DTLNS_UINT("data.noise_count", S::Prepare, noise_count),
      DTLNS_UINT("data.noise_seed", S::Prepare, noise_seed),

      Field{"backbone.kind", S::Pretrain,
            [](const RunConfig& c) { return backbone::to_string(c.backbone); },
            [](RunConfig& c, std::string_view v) { c.backbone = backbone::parse_kind(v); }},
      DTLNS_UINT("backbone.layers", S::Pretrain, layers),
      DTLNS_UINT("backbone.dim", S::Pretrain, dim),
      DTLNS_REAL("train.lr", S::Pretrain, train.lr),
      DTLNS_UINT("train.batch_size", S::Pretrain, train.batch_size),
      DTLNS_REAL("train.l2", S::Pretrain, train.l2),
      DTLNS_UINT("train.patience", S::Pretrain, train.patience),
      DTLNS_UINT("train.eval_every", S::Pretrain, train.eval_every),
      DTLNS_UINT("pretrain.epochs", S::Pretrain, pretrain_epochs),
      DTLNS_UINT("pretrain.seed", S::Pretrain, pretrain_seed),

      DTLNS_UINT("tree.branching", S::Trees, branching),
      DTLNS_UINT("tree.leaf_size", S::Trees, leaf_size),
      DTLNS_UINT("tree.spectral_dim", S::Trees, spectral_dim),
      DTLNS_REAL("tree.spectral_tol", S::Trees, spectral_tol),
      Field{"tree.solver", S::Trees, [](const RunConfig& c) { return solver_name(c.solver); },
            [](RunConfig& c, std::string_view v) { c.solver = parse_solver(v); }},
      DTLNS_UINT("tree.seed", S::Trees, tree_seed),

      Field{"fni.binding", S::Fni, [](const RunConfig& c) { return to_string(c.fni); },
            [](RunConfig& c, std::string_view v) { c.fni = parse_binding(v); }},
      DTLNS_UINT("fni.candidates", S::Fni, candidates),
      DTLNS_UINT("fni.history", S::Fni, history),
      DTLNS_UINT("fni.rule_top_n", S::Fni, rule_top_n),
      DTLNS_PATH("fni.mock_script", S::Fni, mock_script),
      DTLNS_TEXT("fni.endpoint.url", S::Fni, endpoint.url),
      DTLNS_TEXT("fni.endpoint.model", S::Fni, endpoint.model),
      DTLNS_REAL("fni.endpoint.temperature", S::Fni, endpoint.temperature),
      DTLNS_TEXT("fni.endpoint.token_env", std::nullopt, endpoint.token_env),
      DTLNS_UINT("fni.endpoint.concurrency", std::nullopt, endpoint.concurrency),
      Field{"fni.endpoint.timeout_ms", std::nullopt,
            [](const RunConfig& c) { return std::to_string(c.endpoint.timeout.count()); },
            [](RunConfig& c, std::string_view v) {
              c.endpoint.timeout = std::chrono::milliseconds(to_uint<std::int64_t>(v));
            }},
      DTLNS_UINT("fni.endpoint.max_retries", std::nullopt, endpoint.max_retries),
      Field{"fni.endpoint.backoff_ms", std::nullopt,
            [](const RunConfig& c) { return std::to_string(c.endpoint.backoff.count()); },
            [](RunConfig& c, std::string_view v) {
              c.endpoint.backoff = std::chrono::milliseconds(to_uint<std::int64_t>(v));
            }},

      Field{"sampler.kind", S::Train, [](const RunConfig& c) { return sampler::to_string(c.sampler.kind); },
            [](RunConfig& c, std::string_view v) { c.sampler.kind = sampler::parse_kind(v); }},
      DTLNS_REAL("sampler.alpha_c", S::Train, sampler.alpha_c),
      DTLNS_REAL("sampler.alpha_s", S::Train, sampler.alpha_s),
      DTLNS_UINT("sampler.pool_size", S::Train, sampler.pool_size),
      DTLNS_UINT("train.epochs", S::Train, train.epochs),
      Field{"eval.ks", S::Train, [](const RunConfig& c) { return fmt_list(c.ks); },
            [](RunConfig& c, std::string_view v) { c.ks = to_list<std::size_t>(v); }},
      // Seeds name per-seed output directories, so they stay out of the hash.
      Field{"run.seeds", std::nullopt, [](const RunConfig& c) { return fmt_list(c.seeds); },
            [](RunConfig& c, std::string_view v) { c.seeds = to_list<std::uint64_t>(v); }},
  };
  return table;
}

#undef DTLNS_UINT
#undef DTLNS_REAL
#undef DTLNS_TEXT
#undef DTLNS_PATH

}  // namespace

RunConfig parse(std::string_view text) {
  RunConfig cfg;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto f = std::find_if(table.begin(), table.end(), [&](const Field& x) { return key == x.key; });
    if (f == table.end()) throw ParseError("unknown key '" + std::string(key) + "'", line_no);
    if (!seen.emplace(key).second) throw ParseError("duplicate key '" + std::string(key) + "'", line_no);
    try {
      f->set(cfg, value);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(std::string(key) + ": " + e.what(), line_no);
    }
  }
  if (cfg.ks.empty() || cfg.seeds.empty()) throw ParseError("eval.ks and run.seeds must be non-empty", 0);
  return cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string serialize(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += f.key;
    out += " = ";
    out += f.get(cfg);
    out += '\n';
  }
  return out;
}

std::string fingerprint(const RunConfig& cfg, Stage stage) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& f : fields()) {
    if (!f.stage || *f.stage > stage) continue;
    feed(f.key);
    feed("=");
    feed(f.get(cfg));
    feed("\n");
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dtlns::config
