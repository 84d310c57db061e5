#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cflens/causal.hpp"
#include "cflens/classifiers.hpp"
#include "cflens/shifter.hpp"
#include "cflens/world.hpp"

namespace cflens::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kNumeric = 3,
  kUndefinedScores = 4,
};

// Checkpoint paths and experiment parameters shared by the commands.
struct RunConfig {
  std::string world;
  std::string attributes;
  std::string shifter;
  std::string target;
  std::string out = ".";
  Index population = 200;
  std::uint64_t seed = 1;
  std::string context;
  bool oracle_shifts = false;
  bool condition_on_factual_attribute = false;
  Index threads = 0;  // 0: hardware concurrency capped by CFLENS_THREADS
};

struct LoadedModels {
  std::optional<WorldSpec> world;
  std::optional<AttributeClassifier> attributes;
  std::optional<ShiftPredictor> shifter;
  std::optional<TargetClassifier> target;
};

// Loads every named checkpoint and rejects any (d, m, n) disagreement
// before compute starts.
LoadedModels load_models(const RunConfig& config);

Index resolve_threads(Index requested);

// Runs the command line; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cflens::cli
