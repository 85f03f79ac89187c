#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "teleplan/coverage.hpp"
#include "teleplan/reward.hpp"
#include "teleplan/scenario.hpp"
#include "teleplan/trainer.hpp"

namespace teleplan {

// |planned ∩ reference| / |planned|. Sizes must match and be non-zero.
double overlap(std::span<const std::string> planned, std::span<const std::string> reference);

// Stage-3 combined reward of a set of site ids.
double selection_reward(std::span<const std::string> plan, const NormalizedScenario& normalized,
                        const RewardWeights& weights, const SemanticScorer& scorer);

// Adds one site at a time, maximizing the stage-3 combined reward of the
// augmented set; ties go to the lowest site index.
std::vector<std::string> plan_greedy(const NormalizedScenario& normalized,
                                     const RewardWeights& weights, const SemanticScorer& scorer);

// Lloyd's k-means over positions weighted by u_hat (k-means++ seeding, 100
// iterations), then the site nearest each centroid with next-nearest
// fallback for duplicates.
std::vector<std::string> plan_kmeans(const NormalizedScenario& normalized, std::size_t k,
                                     std::uint64_t seed);

// Uniformly random k-subset, sorted by site index.
std::vector<std::string> plan_random(const Scenario& scenario, std::size_t k, std::uint64_t seed);

// One training run or planner output to be compared.
struct RunInput {
  std::string label;      // e.g. "grpo"
  std::string source;     // history file or planner name
  std::uint64_t seed = 0;
  std::optional<TrainHistory> history;
  std::vector<std::string> plan;
};

struct RunRow {
  std::string label;
  std::string source;
  std::uint64_t seed = 0;
  std::optional<double> final_reward;  // last-window mean of mean_reward
  std::vector<double> reward_curve;
  std::optional<double> overlap;       // vs the scenario reference selection
  std::optional<double> plan_reward;   // stage-3 combined reward of the plan
  std::optional<CoverageStats> coverage;
};

struct PanelSummary {
  std::string label;
  std::size_t runs = 0;
  std::optional<double> final_reward_mean;
  std::optional<double> final_reward_std;  // population
  std::optional<double> overlap_mean;
  std::optional<double> overlap_std;
};

struct ComparisonReport {
  std::vector<RunRow> rows;
  std::vector<PanelSummary> panels;  // grouped by label, first-appearance order
};

struct CompareOptions {
  std::size_t window = 50;
  RewardWeights weights;
  RadioConfig radio;
  std::shared_ptr<const SemanticScorer> scorer;  // mock when null
  double cell_size_m = 50.0;
  bool with_coverage = true;
  std::size_t threads = 1;
};

ComparisonReport compare_runs(std::span<const RunInput> runs, const Scenario& scenario,
                              const CompareOptions& options = {});

nlohmann::json report_to_json(const ComparisonReport& report);
// Per-run table: label,source,seed,final_reward,overlap,plan_reward,frac_above_-80dbm,frac_above_-60dbm
std::string report_to_csv(const ComparisonReport& report);

// FeatureCollection of every site as a Point with {id, selected, in_reference}.
nlohmann::json plan_to_geojson(std::span<const std::string> plan, const Scenario& scenario);
void export_geojson(std::span<const std::string> plan, const Scenario& scenario,
                    const std::string& path);

}  // namespace teleplan
