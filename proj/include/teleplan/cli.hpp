#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "teleplan/coverage.hpp"
#include "teleplan/reward.hpp"
#include "teleplan/trainer.hpp"

namespace teleplan {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct ScorerConfig {
  std::string kind = "mock";  // mock | remote
  RemoteScorerConfig remote;
};

// Everything a run needs besides its input files; written back as
// config.json next to every output.
struct RunConfig {
  TrainConfig train;
  RadioConfig radio;
  ScorerConfig scorer;
  double cell_size_m = 50.0;  // coverage grid used by eval
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Reads a RunConfig JSON file; absent sections keep their defaults.
RunConfig load_run_config(const std::string& path);

// Mock or remote scorer; TELEPLAN_SCORER_URL replaces the remote endpoint.
std::shared_ptr<const SemanticScorer> make_scorer(const ScorerConfig& config);

// Entry point shared by the executable and the tests. `args` excludes the
// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace teleplan
