#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dtlns/backbone.hpp"
#include "dtlns/fni.hpp"
#include "dtlns/sampler.hpp"
#include "dtlns/spectral.hpp"

namespace dtlns::config {

enum class FniBinding { Off, Rule, Llm, Mock };

std::string to_string(FniBinding b);
FniBinding parse_binding(std::string_view text);

struct RunConfig {
  // data
  std::filesystem::path input;
  std::size_t kcore = 10;
  std::uint64_t split_seed = 0;
  double noise_fraction = 0.0;  // ignored when noise_count > 0
  std::size_t noise_count = 0;
  std::uint64_t noise_seed = 0;

  // trees
  std::size_t branching = 4;
  std::size_t leaf_size = 30;
  std::size_t spectral_dim = 32;
  double spectral_tol = 1e-6;
  spectral::Solver solver = spectral::Solver::Auto;
  std::uint64_t tree_seed = 0;

  // backbone and optimisation
  backbone::Kind backbone = backbone::Kind::LightGCN;
  std::size_t layers = 3;
  std::size_t dim = 64;
  backbone::TrainConfig train;  // train.seed is overridden per run seed
  std::size_t pretrain_epochs = 1000;
  std::uint64_t pretrain_seed = 0;

  // false-negative identification
  FniBinding fni = FniBinding::Rule;
  std::size_t candidates = 20;
  std::size_t history = 30;
  std::size_t rule_top_n = 10;
  std::filesystem::path mock_script;
  fni::EndpointConfig endpoint;

  sampler::SamplerConfig sampler;
  std::vector<std::size_t> ks = {10, 20};
  std::vector<std::uint64_t> seeds = {0};

  bool operator==(const RunConfig&) const = default;
};

/// Parses `key = value` lines; `#` starts a comment. Unknown keys and
/// malformed values are errors that carry the line number.
RunConfig parse(std::string_view text);
RunConfig load(const std::filesystem::path& path);

/// Every key in a fixed order, doubles printed round-trip exact.
std::string serialize(const RunConfig& cfg);

enum class Stage { Prepare, Pretrain, Trees, Fni, Train };

/// FNV-1a hash over the serialized keys that influence `stage` and every
/// stage upstream of it, as 16 hex digits.
std::string fingerprint(const RunConfig& cfg, Stage stage);

}  // namespace dtlns::config
