#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "teleplan/reward.hpp"
#include "teleplan/scenario.hpp"

namespace teleplan {

// Per-candidate input: [t, u, e, m, key_area, x, y, d_nn, selected/k, remaining/n].
inline constexpr std::size_t kStateDim = 10;
inline constexpr std::size_t kHiddenWidth = 128;
inline constexpr std::size_t kHiddenLayers = 4;

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

// Weights of a ReLU MLP that maps one feature row to one scalar. The same
// network scores every candidate, so it handles any pool size.
struct PolicyParams {
  std::vector<DenseLayer> layers;
  std::uint64_t version = 0;

  std::size_t input_dim() const;
  std::size_t parameter_count() const;
  bool all_finite() const;

  PolicyParams zeros_like() const;
  // this += scale * other (same shapes)
  void add_scaled(const PolicyParams& other, double scale);
  double dot(const PolicyParams& other) const;
  double norm() const { return std::sqrt(dot(*this)); }

  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

  bool operator==(const PolicyParams& other) const;
};

// He-uniform weights, zero biases; input -> 4 x 128 -> 1.
PolicyParams init_policy(std::size_t feature_dim, std::uint64_t seed);

nlohmann::json params_to_json(const PolicyParams& params);
PolicyParams params_from_json(const nlohmann::json& j);
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

// Activations kept for the backward pass. acts[0] is the input block,
// acts[l + 1] the output of layer l (the last one is the logit column).
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;
};

// Row-wise scores of `inputs` (rows x input_dim).
Eigen::VectorXd mlp_forward(const PolicyParams& params, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache = nullptr);
// Accumulates d(sum_i dscore_i * score_i)/d(params) into `grad`.
void mlp_backward(const PolicyParams& params, const ForwardCache& cache,
                  const Eigen::VectorXd& dscore, PolicyParams& grad);

// Numerically stable log-softmax.
Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits);

// Probabilities over all rows of `states`; rows with mask=true get exactly 0.
Eigen::VectorXd forward(const PolicyParams& params, const Eigen::MatrixXd& states,
                        const std::vector<bool>& mask);

// Inverse-CDF draw in index order from a uniform in [0, 1).
std::size_t sample_action(std::span<const double> probabilities, double uniform01);
std::size_t sample_action(std::span<const double> probabilities, std::mt19937_64& rng);
double uniform01(std::mt19937_64& rng);

// Static per-site features and the incremental selection state used to build
// state views.
class SelectionEnv {
 public:
  SelectionEnv(const NormalizedScenario& normalized, std::span<const double> complaint_scores);
  explicit SelectionEnv(const RewardModel& model)
      : SelectionEnv(model.normalized(), model.site_complaint_scores()) {}

  std::size_t pool_size() const { return pool_size_; }
  std::size_t select_count() const { return select_count_; }
  const Eigen::MatrixXd& site_features() const { return site_features_; }  // n x 7
  const std::vector<Point>& positions() const { return positions_; }
  double diagonal() const { return diagonal_; }

 private:
  std::size_t pool_size_;
  std::size_t select_count_;
  Eigen::MatrixXd site_features_;
  std::vector<Point> positions_;
  double diagonal_;
};

// Mutable walk through one episode.
class Episode {
 public:
  explicit Episode(const SelectionEnv& env);

  const std::vector<bool>& selected() const { return selected_; }
  std::size_t selected_count() const { return count_; }
  bool done() const { return count_ == env_->select_count(); }
  // Unselected site indices in ascending order.
  const std::vector<std::size_t>& candidates() const { return candidates_; }

  // State rows for candidates() (candidates x kStateDim).
  Eigen::MatrixXd candidate_states() const;
  // State rows for every site (n x kStateDim).
  Eigen::MatrixXd all_states() const;

  void select(std::size_t site);

 private:
  void fill_row(std::size_t site, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const;

  const SelectionEnv* env_;
  std::vector<bool> selected_;
  std::vector<double> nearest_;
  std::vector<std::size_t> candidates_;
  std::size_t count_ = 0;
};

struct Trajectory {
  std::vector<std::size_t> actions;     // site indices in selection order
  std::vector<double> old_log_probs;    // under the sampling policy
  RewardBreakdown reward;
  bool has_reward = false;
};

Trajectory rollout(const PolicyParams& params, const SelectionEnv& env, std::mt19937_64& rng);
// Argmax decoding; ties go to the lowest site index.
Trajectory greedy_decode(const PolicyParams& params, const SelectionEnv& env);

struct LogProbGrad {
  std::vector<double> log_probs;
  PolicyParams grad;
};

// Replays `trajectory` under `params`, returning per-step log-probabilities
// and sum_t coeff_t * grad log pi(a_t | s_t).
LogProbGrad log_prob_and_grad(const PolicyParams& params, const SelectionEnv& env,
                              const Trajectory& trajectory, std::span<const double> coefficients);

// Throws ContractViolation unless actions are distinct, in range and k long.
void check_trajectory(const SelectionEnv& env, const Trajectory& trajectory);

}  // namespace teleplan
