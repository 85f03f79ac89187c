#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "teleplan/policy.hpp"
#include "teleplan/reward.hpp"
#include "teleplan/scenario.hpp"

namespace teleplan {

enum class OptimizerKind { kSgd, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
  std::size_t group_size = 8;       // G
  double clip_epsilon = 0.2;        // epsilon of the clip operator
  double kl_beta = 0.04;            // weight of the KL penalty to the reference
  double learning_rate = 3e-4;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t stage_cap = 400;      // iterations per stage before a forced advance
  std::size_t window = 50;          // W
  double tau = 0.02;                // relative-change threshold for stage advance
  std::size_t total_iterations = 0; // 0 means 3 * stage_cap
  std::uint64_t seed = 0;
  std::size_t sft_epochs = 200;
  double sft_learning_rate = 1e-3;
  double value_learning_rate = 1e-3;  // PPO value head
  std::size_t threads = 1;
  RewardWeights weights;

  std::size_t iterations() const { return total_iterations ? total_iterations : 3 * stage_cap; }
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct IterationRecord {
  std::size_t iter = 0;
  Stage stage = Stage::kOne;
  double mean_reward = 0.0;  // mean combined reward of the group
  double max_reward = 0.0;
  double objective = 0.0;
  double mean_kl = 0.0;
  double grad_norm = 0.0;
  bool forced_advance = false;  // set on the first record after a cap-forced advance
  std::uint64_t scorer_fallbacks = 0;
};

struct StageTransition {
  std::size_t iter = 0;  // first iteration of the new stage
  Stage from = Stage::kOne;
  Stage to = Stage::kTwo;
  bool forced = false;
};

struct TrainHistory {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::vector<IterationRecord> records;
  std::vector<StageTransition> transitions;
  std::uint64_t scorer_fallbacks = 0;
  std::uint64_t clamped_llm_scores = 0;

  // Mean of mean_reward over the last `window` records (all when shorter).
  double final_window_mean(std::size_t window) const;
};

// Header: iter,stage,mean_reward,max_reward,objective,mean_kl,grad_norm
std::string history_to_csv(const TrainHistory& history);
TrainHistory history_from_csv(const std::string& text);
nlohmann::json history_metadata(const TrainHistory& history, const TrainConfig& config);
void write_history(const TrainHistory& history, const TrainConfig& config,
                   const std::string& csv_path, const std::string& json_path);

// ---------------------------------------------------------------------------
// Objective pieces

// (R_i - mean) / population std; all zeros when std < 1e-8. Requires G >= 2.
std::vector<double> group_advantages(std::span<const double> rewards);

// max(min(r, 1 + eps), 1 - eps)
double clip_ratio(double ratio, double epsilon);

// sum p ln(p / q) with 0 ln 0 = 0.
double kl_categorical(std::span<const double> p, std::span<const double> q);

struct ObjectiveEval {
  double objective = 0.0;
  double surrogate = 0.0;  // mean clipped surrogate
  double mean_kl = 0.0;    // mean per-step KL(pi_theta || pi_ref)
  PolicyParams grad;       // empty unless requested
};

// Clipped group objective for fixed sampled trajectories:
// mean_i mean_t [min(ratio * A_i, clip(ratio) * A_i) - beta * KL_t].
ObjectiveEval grpo_objective(const PolicyParams& theta, const PolicyParams& reference,
                             const SelectionEnv& env, std::span<const Trajectory> trajectories,
                             std::span<const double> advantages, double epsilon, double beta,
                             bool with_grad, std::size_t threads = 1);

// Gradient-ascent optimizer over PolicyParams.
class ParamOptimizer {
 public:
  ParamOptimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9,
                 double beta2 = 0.999, double epsilon = 1e-8);

  // Moves `params` along `grad` (ascent).
  void ascend(PolicyParams& params, const PolicyParams& grad);

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::optional<PolicyParams> m_, v_;
};

// Rollout RNG for global rollout number `index` of a run seeded with `seed`.
std::mt19937_64 rollout_rng(std::uint64_t seed, std::uint64_t index);

struct StepResult {
  PolicyParams params;
  IterationRecord record;
  std::vector<Trajectory> group;
};

// One improved-GRPO iteration: sample G selections under theta_old, score
// them at `stage`, normalize within the group and take one ascent step.
StepResult grpo_step(const RewardModel& model, const SelectionEnv& env, const PolicyParams& theta,
                     const PolicyParams& theta_old, const PolicyParams& reference,
                     const TrainConfig& config, Stage stage, std::size_t iteration,
                     ParamOptimizer& optimizer);

// Stage for the next iteration given the history so far. Sets *forced when
// the advance is due to the iteration cap.
Stage stage_scheduler(const TrainHistory& history, const TrainConfig& config,
                      bool* forced = nullptr);

// ---------------------------------------------------------------------------
// Training drivers

struct TrainResult {
  PolicyParams params;
  PolicyParams reference;
  TrainHistory history;
  std::optional<PolicyParams> value_params;  // PPO only
};

using CheckpointFn = std::function<void(const PolicyParams&, std::size_t iter, Stage stage)>;

struct TrainOptions {
  // Starting point and KL anchor; a fresh init_policy(seed) when absent.
  std::optional<PolicyParams> reference;
  std::shared_ptr<const SemanticScorer> scorer;  // mock when null
  CheckpointFn on_checkpoint;                    // stage transitions and run end
};

TrainResult train_grpo(const Scenario& scenario, const TrainConfig& config,
                       const TrainOptions& options = {});
// Same loop with the stage-3 reward from the first iteration.
TrainResult train_vanilla_grpo(const Scenario& scenario, const TrainConfig& config,
                               const TrainOptions& options = {});
// Clipped policy gradient with a learned value baseline, stage-3 reward.
TrainResult train_ppo(const Scenario& scenario, const TrainConfig& config,
                      const TrainOptions& options = {});

// Pooled state fed to the PPO value head: mean candidate features plus the
// selection context (kStateDim values).
Eigen::VectorXd pooled_state(const Episode& episode);

// ---------------------------------------------------------------------------
// Supervised pretraining of the reference policy

// Ground-truth set ordered by per-site stage-1 score, descending.
Trajectory expert_trajectory(const NormalizedScenario& normalized,
                             std::span<const std::string> selection, const RewardWeights& weights);

struct SftResult {
  PolicyParams params;
  std::vector<double> epoch_loss;  // mean per-step cross-entropy before each epoch's update
};

// Behavior cloning on every scenario carrying actual_built or planted_optimum.
// Throws PreconditionError when none does.
SftResult sft_pretrain(std::span<const Scenario> scenarios, const TrainConfig& config,
                       std::optional<PolicyParams> init = std::nullopt,
                       std::shared_ptr<const SemanticScorer> scorer = nullptr);

}  // namespace teleplan
