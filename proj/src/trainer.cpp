#include "teleplan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "parallel.hpp"
#include "teleplan/error.hpp"

namespace teleplan {

// ---------------------------------------------------------------------------
// Config

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw PreconditionError("unknown optimizer: " + name);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"group_size", c.group_size},
                     {"clip_epsilon", c.clip_epsilon},
                     {"kl_beta", c.kl_beta},
                     {"learning_rate", c.learning_rate},
                     {"optimizer", to_string(c.optimizer)},
                     {"adam_beta1", c.adam_beta1},
                     {"adam_beta2", c.adam_beta2},
                     {"adam_epsilon", c.adam_epsilon},
                     {"stage_cap", c.stage_cap},
                     {"window", c.window},
                     {"tau", c.tau},
                     {"total_iterations", c.total_iterations},
                     {"seed", c.seed},
                     {"sft_epochs", c.sft_epochs},
                     {"sft_learning_rate", c.sft_learning_rate},
                     {"value_learning_rate", c.value_learning_rate},
                     {"threads", c.threads},
                     {"weights", c.weights}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.group_size = j.value("group_size", d.group_size);
  c.clip_epsilon = j.value("clip_epsilon", d.clip_epsilon);
  c.kl_beta = j.value("kl_beta", d.kl_beta);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.optimizer = parse_optimizer(j.value("optimizer", to_string(d.optimizer)));
  c.adam_beta1 = j.value("adam_beta1", d.adam_beta1);
  c.adam_beta2 = j.value("adam_beta2", d.adam_beta2);
  c.adam_epsilon = j.value("adam_epsilon", d.adam_epsilon);
  c.stage_cap = j.value("stage_cap", d.stage_cap);
  c.window = j.value("window", d.window);
  c.tau = j.value("tau", d.tau);
  c.total_iterations = j.value("total_iterations", d.total_iterations);
  c.seed = j.value("seed", d.seed);
  c.sft_epochs = j.value("sft_epochs", d.sft_epochs);
  c.sft_learning_rate = j.value("sft_learning_rate", d.sft_learning_rate);
  c.value_learning_rate = j.value("value_learning_rate", d.value_learning_rate);
  c.threads = j.value("threads", d.threads);
  c.weights = j.contains("weights") ? j.at("weights").get<RewardWeights>() : d.weights;
}

namespace {

void check_config(const TrainConfig& c) {
  if (c.group_size < 2) throw PreconditionError("group_size must be >= 2");
  if (!(c.clip_epsilon > 0.0 && c.clip_epsilon < 1.0))
    throw PreconditionError("clip_epsilon must be in (0, 1)");
  if (!(c.kl_beta >= 0.0)) throw PreconditionError("kl_beta must be >= 0");
  if (!(c.learning_rate > 0.0)) throw PreconditionError("learning_rate must be > 0");
  if (c.window < 1) throw PreconditionError("window must be >= 1");
  if (c.stage_cap < 1) throw PreconditionError("stage_cap must be >= 1");
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fallback_count(const SemanticScorer& scorer) {
  if (const auto* remote = dynamic_cast<const RemoteScorer*>(&scorer)) return remote->fallback_count();
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// History

double TrainHistory::final_window_mean(std::size_t window) const {
  if (records.empty()) return 0.0;
  const std::size_t n = std::min(window == 0 ? records.size() : window, records.size());
  double s = 0.0;
  for (std::size_t i = records.size() - n; i < records.size(); ++i) s += records[i].mean_reward;
  return s / static_cast<double>(n);
}

std::string history_to_csv(const TrainHistory& history) {
  std::string out = "iter,stage,mean_reward,max_reward,objective,mean_kl,grad_norm\n";
  for (const auto& r : history.records) {
    out += csv::format_row({std::to_string(r.iter), std::to_string(static_cast<int>(r.stage)),
                            csv::format_double(r.mean_reward), csv::format_double(r.max_reward),
                            csv::format_double(r.objective), csv::format_double(r.mean_kl),
                            csv::format_double(r.grad_norm)});
  }
  return out;
}

TrainHistory history_from_csv(const std::string& text) {
  const auto rows = csv::parse(text);
  static const csv::Row header = {"iter", "stage", "mean_reward", "max_reward",
                                  "objective", "mean_kl", "grad_norm"};
  if (rows.empty() || rows.front() != header) throw SchemaError("unexpected history header");
  TrainHistory h;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (row.size() != header.size())
      throw SchemaError("history row " + std::to_string(i) + " has wrong arity");
    try {
      IterationRecord r;
      r.iter = static_cast<std::size_t>(std::stoull(row[0]));
      r.stage = stage_from_int(std::stoi(row[1]));
      r.mean_reward = std::stod(row[2]);
      r.max_reward = std::stod(row[3]);
      r.objective = std::stod(row[4]);
      r.mean_kl = std::stod(row[5]);
      r.grad_norm = std::stod(row[6]);
      if (!h.records.empty() && r.stage != h.records.back().stage)
        h.transitions.push_back({r.iter, h.records.back().stage, r.stage, false});
      h.records.push_back(r);
    } catch (const std::logic_error&) {
      throw SchemaError("unparsable history row " + std::to_string(i));
    }
  }
  return h;
}

nlohmann::json history_metadata(const TrainHistory& history, const TrainConfig& config) {
  nlohmann::json transitions = nlohmann::json::array();
  for (const auto& t : history.transitions)
    transitions.push_back({{"iter", t.iter},
                           {"from", static_cast<int>(t.from)},
                           {"to", static_cast<int>(t.to)},
                           {"forced", t.forced}});
  return {{"algorithm", history.algorithm},
          {"seed", history.seed},
          {"iterations", history.records.size()},
          {"config", config},
          {"stage_transitions", transitions},
          {"scorer_fallbacks", history.scorer_fallbacks},
          {"clamped_llm_scores", history.clamped_llm_scores}};
}

void write_history(const TrainHistory& history, const TrainConfig& config,
                   const std::string& csv_path, const std::string& json_path) {
  std::ofstream csv_out(csv_path, std::ios::binary);
  if (!csv_out) throw PreconditionError("cannot write " + csv_path);
  csv_out << history_to_csv(history);
  std::ofstream json_out(json_path, std::ios::binary);
  if (!json_out) throw PreconditionError("cannot write " + json_path);
  json_out << history_metadata(history, config).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Objective pieces

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw PreconditionError("group_advantages needs at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> out(rewards.size(), 0.0);
  if (!(sd >= 1e-8)) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
  return out;
}

double clip_ratio(double ratio, double epsilon) {
  return std::max(std::min(ratio, 1.0 + epsilon), 1.0 - epsilon);
}

double kl_categorical(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ContractViolation("KL over distributions of different size");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) throw ContractViolation("KL support mismatch");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

namespace {

struct TrajectoryTerms {
  double surrogate = 0.0;  // sum over steps
  double kl = 0.0;         // sum over steps
  PolicyParams grad;
};

// Per-step clipped surrogate and exact KL for one trajectory; the gradient of
// scale * sum_t (surr_t - beta * KL_t) is accumulated when requested.
TrajectoryTerms trajectory_terms(const PolicyParams& theta, const PolicyParams& reference,
                                 const SelectionEnv& env, const Trajectory& traj,
                                 std::span<const double> advantages, double epsilon, double beta,
                                 double scale, bool with_grad) {
  check_trajectory(env, traj);
  if (traj.old_log_probs.size() != traj.actions.size())
    throw ContractViolation("trajectory lacks old log-probabilities");
  TrajectoryTerms out;
  if (with_grad) out.grad = theta.zeros_like();
  Episode ep(env);
  ForwardCache cache;
  for (std::size_t t = 0; t < traj.actions.size(); ++t) {
    const std::size_t site = traj.actions[t];
    const auto& cand = ep.candidates();
    const auto r = static_cast<Eigen::Index>(std::lower_bound(cand.begin(), cand.end(), site) -
                                             cand.begin());
    const Eigen::MatrixXd x = ep.candidate_states();
    const Eigen::VectorXd lp = log_softmax(mlp_forward(theta, x, with_grad ? &cache : nullptr));
    const Eigen::VectorXd lq = log_softmax(mlp_forward(reference, x));
    const Eigen::VectorXd p = lp.array().exp();
    const Eigen::VectorXd diff = lp - lq;
    const double kl = std::max(0.0, p.dot(diff));

    const double a = advantages[t];
    const double ratio = std::exp(lp(r) - traj.old_log_probs[t]);
    const double unclipped = ratio * a;
    const double clipped = clip_ratio(ratio, epsilon) * a;
    out.surrogate += std::min(unclipped, clipped);
    out.kl += kl;

    if (with_grad) {
      // d/dz of beta * KL is beta * p * (lp - lq - KL).
      Eigen::VectorXd dz = (-beta * p.array() * (diff.array() - kl)).matrix();
      if (unclipped <= clipped && a != 0.0) {
        dz -= unclipped * p;
        dz(r) += unclipped;
      }
      dz *= scale;
      mlp_backward(theta, cache, dz, out.grad);
    }
    ep.select(site);
  }
  return out;
}

// Objective with one advantage per step of every trajectory.
ObjectiveEval objective_per_step(const PolicyParams& theta, const PolicyParams& reference,
                                 const SelectionEnv& env, std::span<const Trajectory> trajectories,
                                 const std::vector<std::vector<double>>& advantages,
                                 double epsilon, double beta, bool with_grad,
                                 std::size_t threads) {
  if (trajectories.empty()) throw PreconditionError("empty trajectory group");
  if (advantages.size() != trajectories.size())
    throw ContractViolation("one advantage vector per trajectory is required");
  const std::size_t g = trajectories.size();
  const double k = static_cast<double>(env.select_count());
  const double scale = 1.0 / (static_cast<double>(g) * k);
  std::vector<TrajectoryTerms> terms(g);
  detail::parallel_for(g, threads, [&](std::size_t i) {
    if (advantages[i].size() != trajectories[i].actions.size())
      throw ContractViolation("advantage count does not match trajectory length");
    terms[i] = trajectory_terms(theta, reference, env, trajectories[i], advantages[i], epsilon,
                                beta, scale, with_grad);
  });
  ObjectiveEval out;
  if (with_grad) out.grad = theta.zeros_like();
  for (const auto& t : terms) {
    out.surrogate += t.surrogate;
    out.mean_kl += t.kl;
    if (with_grad) out.grad.add_scaled(t.grad, 1.0);
  }
  out.surrogate *= scale;
  out.mean_kl *= scale;
  out.objective = out.surrogate - beta * out.mean_kl;
  return out;
}

}  // namespace

ObjectiveEval grpo_objective(const PolicyParams& theta, const PolicyParams& reference,
                             const SelectionEnv& env, std::span<const Trajectory> trajectories,
                             std::span<const double> advantages, double epsilon, double beta,
                             bool with_grad, std::size_t threads) {
  if (advantages.size() != trajectories.size())
    throw ContractViolation("one advantage per trajectory is required");
  std::vector<std::vector<double>> per_step(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    per_step[i].assign(trajectories[i].actions.size(), advantages[i]);
  return objective_per_step(theta, reference, env, trajectories, per_step, epsilon, beta,
                            with_grad, threads);
}

// ---------------------------------------------------------------------------
// Optimizer

ParamOptimizer::ParamOptimizer(OptimizerKind kind, double learning_rate, double beta1,
                               double beta2, double epsilon)
    : kind_(kind), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void ParamOptimizer::ascend(PolicyParams& params, const PolicyParams& grad) {
  ++steps_;
  ++params.version;
  if (kind_ == OptimizerKind::kSgd) {
    params.add_scaled(grad, lr_);
    return;
  }
  if (!m_) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](auto& p, const auto& g, auto& m, auto& v) {
      m = beta1_ * m + (1.0 - beta1_) * g;
      v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
      p.array() += lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    };
    update(params.layers[l].weight, grad.layers[l].weight, m_->layers[l].weight, v_->layers[l].weight);
    update(params.layers[l].bias, grad.layers[l].bias, m_->layers[l].bias, v_->layers[l].bias);
  }
}

std::mt19937_64 rollout_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(seed + index));
}

// ---------------------------------------------------------------------------
// GRPO

namespace {

std::vector<Trajectory> sample_group(const RewardModel& model, const SelectionEnv& env,
                                     const PolicyParams& theta_old, const TrainConfig& config,
                                     Stage stage, std::size_t iteration) {
  const std::size_t g = config.group_size;
  std::vector<Trajectory> group(g);
  detail::parallel_for(g, config.threads, [&](std::size_t i) {
    auto rng = rollout_rng(config.seed, static_cast<std::uint64_t>(iteration) * g + i);
    group[i] = rollout(theta_old, env, rng);
    group[i].reward = model.evaluate(group[i].actions, stage);
    group[i].has_reward = true;
  });
  return group;
}

void fill_reward_stats(IterationRecord& rec, const std::vector<Trajectory>& group) {
  double sum = 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& t : group) {
    sum += t.reward.combined;
    best = std::max(best, t.reward.combined);
  }
  rec.mean_reward = sum / static_cast<double>(group.size());
  rec.max_reward = best;
}

[[noreturn]] void abort_training(const IterationRecord& rec) {
  std::ostringstream ss;
  ss << "non-finite training signal at iteration " << rec.iter << " (stage "
     << static_cast<int>(rec.stage) << ", mean_reward " << rec.mean_reward << ", objective "
     << rec.objective << ", mean_kl " << rec.mean_kl << ", grad_norm " << rec.grad_norm << ")";
  throw TrainingAborted(ss.str());
}

}  // namespace

StepResult grpo_step(const RewardModel& model, const SelectionEnv& env, const PolicyParams& theta,
                     const PolicyParams& theta_old, const PolicyParams& reference,
                     const TrainConfig& config, Stage stage, std::size_t iteration,
                     ParamOptimizer& optimizer) {
  check_config(config);
  StepResult out;
  out.group = sample_group(model, env, theta_old, config, stage, iteration);
  std::vector<double> rewards;
  rewards.reserve(out.group.size());
  for (const auto& t : out.group) rewards.push_back(t.reward.combined);
  const auto adv = group_advantages(rewards);

  const auto eval = grpo_objective(theta, reference, env, out.group, adv, config.clip_epsilon,
                                   config.kl_beta, true, config.threads);
  auto& rec = out.record;
  rec.iter = iteration;
  rec.stage = stage;
  fill_reward_stats(rec, out.group);
  rec.objective = eval.objective;
  rec.mean_kl = eval.mean_kl;
  rec.grad_norm = eval.grad.norm();
  rec.scorer_fallbacks = fallback_count(model.scorer());
  if (!std::isfinite(rec.objective) || !std::isfinite(rec.grad_norm) ||
      !std::isfinite(rec.mean_reward))
    abort_training(rec);

  out.params = theta;
  optimizer.ascend(out.params, eval.grad);
  if (!out.params.all_finite()) abort_training(rec);
  return out;
}

Stage stage_scheduler(const TrainHistory& history, const TrainConfig& config, bool* forced) {
  if (forced) *forced = false;
  if (history.records.empty()) return Stage::kOne;
  const Stage current = history.records.back().stage;
  if (current == Stage::kThree) return current;
  const Stage next = stage_from_int(static_cast<int>(current) + 1);

  std::size_t in_stage = 0;
  for (auto it = history.records.rbegin(); it != history.records.rend() && it->stage == current; ++it)
    ++in_stage;
  if (in_stage >= config.stage_cap) {
    if (forced) *forced = true;
    return next;
  }
  const std::size_t w = config.window;
  if (in_stage < 2 * w) return current;
  const std::size_t end = history.records.size();
  double recent = 0.0;
  double previous = 0.0;
  for (std::size_t i = end - w; i < end; ++i) recent += history.records[i].mean_reward;
  for (std::size_t i = end - 2 * w; i < end - w; ++i) previous += history.records[i].mean_reward;
  recent /= static_cast<double>(w);
  previous /= static_cast<double>(w);
  const double change = std::abs(recent - previous) / (std::abs(previous) + 1e-8);
  return change < config.tau ? next : current;
}

namespace {

struct RunSetup {
  std::shared_ptr<const SemanticScorer> scorer;
  std::unique_ptr<RewardModel> model;
  std::unique_ptr<SelectionEnv> env;
  PolicyParams reference;
};

RunSetup setup_run(const Scenario& scenario, const TrainConfig& config, const TrainOptions& options) {
  check_config(config);
  RunSetup s;
  s.scorer = options.scorer ? options.scorer : std::make_shared<MockScorer>();
  s.model = std::make_unique<RewardModel>(normalize_features(scenario), config.weights, s.scorer);
  s.env = std::make_unique<SelectionEnv>(*s.model);
  s.reference = options.reference ? *options.reference : init_policy(kStateDim, config.seed);
  if (s.reference.input_dim() != kStateDim)
    throw PreconditionError("reference policy expects " + std::to_string(s.reference.input_dim()) +
                            " inputs, state has " + std::to_string(kStateDim));
  return s;
}

TrainResult run_group_training(const Scenario& scenario, const TrainConfig& config,
                               const TrainOptions& options, bool staged, const char* name) {
  auto setup = setup_run(scenario, config, options);
  TrainResult result;
  result.reference = setup.reference;
  result.history.algorithm = name;
  result.history.seed = config.seed;
  PolicyParams theta = setup.reference;
  ParamOptimizer opt(config.optimizer, config.learning_rate, config.adam_beta1, config.adam_beta2,
                     config.adam_epsilon);
  Stage stage = staged ? Stage::kOne : Stage::kThree;
  bool forced_pending = false;
  const std::size_t iters = config.iterations();
  result.history.records.reserve(iters);
  for (std::size_t it = 0; it < iters; ++it) {
    if (staged && it > 0) {
      bool forced = false;
      const Stage next = stage_scheduler(result.history, config, &forced);
      if (next != stage) {
        result.history.transitions.push_back({it, stage, next, forced});
        if (options.on_checkpoint) options.on_checkpoint(theta, it, stage);
        stage = next;
        forced_pending = forced;
      }
    }
    const PolicyParams theta_old = theta;
    auto step = grpo_step(*setup.model, *setup.env, theta, theta_old, setup.reference, config,
                          stage, it, opt);
    step.record.forced_advance = forced_pending;
    forced_pending = false;
    theta = std::move(step.params);
    result.history.records.push_back(step.record);
  }
  result.history.scorer_fallbacks = fallback_count(*setup.scorer);
  result.history.clamped_llm_scores = setup.model->diagnostics().clamped_llm_scores.load();
  if (options.on_checkpoint) options.on_checkpoint(theta, iters, stage);
  result.params = std::move(theta);
  return result;
}

}  // namespace

TrainResult train_grpo(const Scenario& scenario, const TrainConfig& config,
                       const TrainOptions& options) {
  return run_group_training(scenario, config, options, true, "grpo");
}

TrainResult train_vanilla_grpo(const Scenario& scenario, const TrainConfig& config,
                               const TrainOptions& options) {
  return run_group_training(scenario, config, options, false, "grpo-vanilla");
}

// ---------------------------------------------------------------------------
// PPO

Eigen::VectorXd pooled_state(const Episode& episode) {
  const Eigen::MatrixXd x = episode.candidate_states();
  if (x.rows() == 0) return Eigen::VectorXd::Zero(kStateDim);
  return x.colwise().mean().transpose();
}

TrainResult train_ppo(const Scenario& scenario, const TrainConfig& config,
                      const TrainOptions& options) {
  auto setup = setup_run(scenario, config, options);
  const auto& env = *setup.env;
  TrainResult result;
  result.reference = setup.reference;
  result.history.algorithm = "ppo";
  result.history.seed = config.seed;
  PolicyParams theta = setup.reference;
  PolicyParams value = init_policy(kStateDim, splitmix64(config.seed ^ 0x76616c7565ULL));
  ParamOptimizer policy_opt(config.optimizer, config.learning_rate, config.adam_beta1,
                            config.adam_beta2, config.adam_epsilon);
  ParamOptimizer value_opt(config.optimizer, config.value_learning_rate, config.adam_beta1,
                           config.adam_beta2, config.adam_epsilon);
  const std::size_t k = env.select_count();
  const std::size_t iters = config.iterations();
  result.history.records.reserve(iters);

  for (std::size_t it = 0; it < iters; ++it) {
    const auto group = sample_group(*setup.model, env, theta, config, Stage::kThree, it);
    const std::size_t g = group.size();

    // Pooled states of every visited step, in trajectory order.
    Eigen::MatrixXd pooled(static_cast<Eigen::Index>(g * k), kStateDim);
    for (std::size_t i = 0; i < g; ++i) {
      Episode ep(env);
      for (std::size_t t = 0; t < k; ++t) {
        pooled.row(static_cast<Eigen::Index>(i * k + t)) = pooled_state(ep).transpose();
        ep.select(group[i].actions[t]);
      }
    }
    ForwardCache vcache;
    const Eigen::VectorXd v = mlp_forward(value, pooled, &vcache);

    std::vector<std::vector<double>> adv(g, std::vector<double>(k));
    Eigen::VectorXd target(static_cast<Eigen::Index>(g * k));
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const auto row = static_cast<Eigen::Index>(i * k + t);
        target(row) = group[i].reward.combined;
        adv[i][t] = group[i].reward.combined - v(row);
      }

    // beta = 0 in the update; the KL to the reference is still reported.
    const auto eval = objective_per_step(theta, setup.reference, env, group, adv,
                                         config.clip_epsilon, 0.0, true, config.threads);
    IterationRecord rec;
    rec.iter = it;
    rec.stage = Stage::kThree;
    fill_reward_stats(rec, group);
    rec.objective = eval.objective;
    rec.mean_kl = eval.mean_kl;
    rec.grad_norm = eval.grad.norm();
    rec.scorer_fallbacks = fallback_count(*setup.scorer);
    if (!std::isfinite(rec.objective) || !std::isfinite(rec.grad_norm) ||
        !std::isfinite(rec.mean_reward))
      abort_training(rec);
    policy_opt.ascend(theta, eval.grad);

    // Squared-error value fit: ascend on -mean (V - R)^2.
    PolicyParams vgrad = value.zeros_like();
    const Eigen::VectorXd dv = -2.0 * (v - target) / static_cast<double>(g * k);
    mlp_backward(value, vcache, dv, vgrad);
    value_opt.ascend(value, vgrad);
    if (!theta.all_finite() || !value.all_finite()) abort_training(rec);
    result.history.records.push_back(rec);
  }
  result.history.scorer_fallbacks = fallback_count(*setup.scorer);
  result.history.clamped_llm_scores = setup.model->diagnostics().clamped_llm_scores.load();
  if (options.on_checkpoint) options.on_checkpoint(theta, iters, Stage::kThree);
  result.params = std::move(theta);
  result.value_params = std::move(value);
  return result;
}

// ---------------------------------------------------------------------------
// SFT

Trajectory expert_trajectory(const NormalizedScenario& normalized,
                             std::span<const std::string> selection, const RewardWeights& weights) {
  auto idx = normalized.scenario.indices_of(selection);
  std::vector<double> score(normalized.size());
  for (std::size_t i = 0; i < score.size(); ++i)
    score[i] = weights.w_t * normalized.t_hat[i] + weights.w_u * normalized.u_hat[i];
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  Trajectory t;
  t.actions = std::move(idx);
  t.old_log_probs.assign(t.actions.size(), 0.0);
  return t;
}

SftResult sft_pretrain(std::span<const Scenario> scenarios, const TrainConfig& config,
                       std::optional<PolicyParams> init,
                       std::shared_ptr<const SemanticScorer> scorer) {
  if (!scorer) scorer = std::make_shared<MockScorer>();
  struct Demo {
    std::unique_ptr<SelectionEnv> env;
    Trajectory traj;
  };
  std::vector<Demo> demos;
  std::size_t total_steps = 0;
  for (const auto& sc : scenarios) {
    const auto& ref = sc.reference_selection();
    if (!ref) continue;
    if (ref->size() != sc.select_count)
      throw ValidationError("ground-truth selection size differs from select_count");
    const auto normalized = normalize_features(sc);
    const auto complaints = complaint_scores(sc, *scorer);
    Demo d{std::make_unique<SelectionEnv>(normalized, complaints),
           expert_trajectory(normalized, *ref, config.weights)};
    check_trajectory(*d.env, d.traj);
    total_steps += d.traj.actions.size();
    demos.push_back(std::move(d));
  }
  if (demos.empty())
    throw PreconditionError(
        "no scenario carries a ground-truth selection; run without SFT (--no-sft)");

  SftResult out;
  out.params = init ? std::move(*init) : init_policy(kStateDim, config.seed);
  ParamOptimizer opt(OptimizerKind::kAdam, config.sft_learning_rate, config.adam_beta1,
                     config.adam_beta2, config.adam_epsilon);
  const double coeff = 1.0 / static_cast<double>(total_steps);
  out.epoch_loss.reserve(config.sft_epochs);
  for (std::size_t epoch = 0; epoch < config.sft_epochs; ++epoch) {
    PolicyParams grad = out.params.zeros_like();
    double loglik = 0.0;
    for (const auto& d : demos) {
      const std::vector<double> coeffs(d.traj.actions.size(), coeff);
      const auto lg = log_prob_and_grad(out.params, *d.env, d.traj, coeffs);
      for (double lp : lg.log_probs) loglik += lp;
      grad.add_scaled(lg.grad, 1.0);
    }
    out.epoch_loss.push_back(-loglik * coeff);
    opt.ascend(out.params, grad);
    if (!out.params.all_finite()) throw TrainingAborted("non-finite parameters during SFT");
  }
  return out;
}

}  // namespace teleplan
