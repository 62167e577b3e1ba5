#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "dtlns/config.hpp"
#include "dtlns/eval.hpp"
#include "dtlns/fni.hpp"

namespace dtlns::pipeline {

namespace fs = std::filesystem;

enum class Command { Prepare, BuildTrees, IdentifyFn, Train, Evaluate, FnAccuracy };

std::string_view name(Command c);

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;  // bad flags or config
inline constexpr int kLocked = 3;
inline constexpr int kFirstStage = 10;  // + Command index
}  // namespace exit_code

int stage_exit_code(Command c);

/// Exclusive writer lock: `<out>/.lock`, created with O_EXCL and removed on
/// destruction.
class RunLock {
 public:
  explicit RunLock(const fs::path& out);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

class LockError : public Error {
 public:
  using Error::Error;
};

/// An upstream artifact was produced under a different config.
class FingerprintError : public Error {
 public:
  using Error::Error;
};

// Stage entry points. Each reads persisted artifacts under `out` plus the
// config and writes its own directory with a manifest.json carrying the
// config fingerprint of the stage.
void cmd_prepare(const config::RunConfig& cfg, const fs::path& out);
void cmd_build_trees(const config::RunConfig& cfg, const fs::path& out);
fni::FnReport cmd_identify_fn(const config::RunConfig& cfg, const fs::path& out);
void cmd_train(const config::RunConfig& cfg, const fs::path& out);
/// Evaluates on the test split. Without `checkpoint`, every trained seed in
/// the run directory is evaluated.
void cmd_evaluate(const config::RunConfig& cfg, const fs::path& out,
                  const std::optional<fs::path>& checkpoint);
fni::AccuracyReport cmd_fn_accuracy(const config::RunConfig& cfg, const fs::path& out);

/// Takes the lock, runs `c` and maps failures to exit codes; errors are
/// logged with the stage name.
int run(Command c, const config::RunConfig& cfg, const fs::path& out,
        const std::optional<fs::path>& checkpoint = std::nullopt);

}  // namespace dtlns::pipeline
