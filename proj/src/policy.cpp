#include "teleplan/policy.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "teleplan/error.hpp"

namespace teleplan {

// ---------------------------------------------------------------------------
// PolicyParams

std::size_t PolicyParams::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t PolicyParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool PolicyParams::all_finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

PolicyParams PolicyParams::zeros_like() const {
  PolicyParams z;
  z.layers.reserve(layers.size());
  for (const auto& l : layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                        Eigen::VectorXd::Zero(l.bias.size())});
  }
  return z;
}

void PolicyParams::add_scaled(const PolicyParams& other, double scale) {
  if (other.layers.size() != layers.size()) throw ContractViolation("parameter shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].weight += scale * other.layers[i].weight;
    layers[i].bias += scale * other.layers[i].bias;
  }
}

double PolicyParams::dot(const PolicyParams& other) const {
  if (other.layers.size() != layers.size()) throw ContractViolation("parameter shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    s += layers[i].weight.cwiseProduct(other.layers[i].weight).sum();
    s += layers[i].bias.dot(other.layers[i].bias);
  }
  return s;
}

std::vector<double> PolicyParams::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out.push_back(l.weight(r, c));
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void PolicyParams::assign_flat(std::span<const double> values) {
  if (values.size() != parameter_count()) throw ContractViolation("flat parameter size mismatch");
  std::size_t k = 0;
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = values[k++];
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = values[k++];
  }
}

bool PolicyParams::operator==(const PolicyParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size())
      return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

PolicyParams init_policy(std::size_t feature_dim, std::uint64_t seed) {
  if (feature_dim < 1) throw PreconditionError("feature_dim must be >= 1");
  std::mt19937_64 rng(seed);
  PolicyParams p;
  std::size_t in = feature_dim;
  for (std::size_t l = 0; l <= kHiddenLayers; ++l) {
    const std::size_t out = l < kHiddenLayers ? kHiddenWidth : 1;
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = limit * (2.0 * uniform01(rng) - 1.0);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoints

nlohmann::json params_to_json(const PolicyParams& params) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : params.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"in", l.weight.cols()}, {"out", l.weight.rows()}, {"weight", w}, {"bias", b}});
  }
  return {{"format", "teleplan-mlp"},
          {"format_version", 1},
          {"activation", "relu"},
          {"param_version", params.version},
          {"layers", layers}};
}

PolicyParams params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "teleplan-mlp" || j.value("format_version", 0) != 1)
    throw SchemaError("not a teleplan-mlp v1 checkpoint");
  PolicyParams p;
  p.version = j.value("param_version", std::uint64_t{0});
  Eigen::Index prev_out = -1;
  for (const auto& lj : j.at("layers")) {
    const auto in = lj.at("in").get<Eigen::Index>();
    const auto out = lj.at("out").get<Eigen::Index>();
    const auto w = lj.at("weight").get<std::vector<double>>();
    const auto b = lj.at("bias").get<std::vector<double>>();
    if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
        static_cast<Eigen::Index>(b.size()) != out || (prev_out >= 0 && prev_out != in))
      throw SchemaError("inconsistent layer shape in checkpoint");
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < out; ++r)
      for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = w[k++];
    for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = b[static_cast<std::size_t>(r)];
    p.layers.push_back(std::move(layer));
    prev_out = out;
  }
  if (p.layers.empty() || prev_out != 1) throw SchemaError("checkpoint must end in a scalar layer");
  if (!p.all_finite()) throw SchemaError("checkpoint contains non-finite values");
  return p;
}

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw PreconditionError("cannot write checkpoint: " + path);
  out << params_to_json(params).dump() << '\n';
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PreconditionError("cannot open checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(std::string("invalid checkpoint JSON: ") + e.what());
  }
  return params_from_json(j);
}

// ---------------------------------------------------------------------------
// MLP

Eigen::VectorXd mlp_forward(const PolicyParams& params, const Eigen::MatrixXd& inputs,
                            ForwardCache* cache) {
  if (params.layers.empty()) throw ContractViolation("empty parameter set");
  if (inputs.cols() != params.layers.front().weight.cols())
    throw ContractViolation("input width does not match the network");
  if (cache) {
    cache->acts.resize(params.layers.size() + 1);
    cache->acts[0] = inputs;
  }
  Eigen::MatrixXd h = inputs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Eigen::MatrixXd z = h * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (l + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    h = std::move(z);
    if (cache) cache->acts[l + 1] = h;
  }
  return h.col(0);
}

void mlp_backward(const PolicyParams& params, const ForwardCache& cache,
                  const Eigen::VectorXd& dscore, PolicyParams& grad) {
  const std::size_t depth = params.layers.size();
  if (cache.acts.size() != depth + 1) throw ContractViolation("forward cache does not match");
  Eigen::MatrixXd dz = dscore;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& a_in = cache.acts[l];
    grad.layers[l].weight.noalias() += dz.transpose() * a_in;
    grad.layers[l].bias += dz.colwise().sum().transpose();
    if (l == 0) break;
    Eigen::MatrixXd da = dz * params.layers[l].weight;
    // ReLU derivative from the post-activation.
    dz = (a_in.array() > 0.0).select(da, 0.0);
  }
}

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

Eigen::VectorXd forward(const PolicyParams& params, const Eigen::MatrixXd& states,
                        const std::vector<bool>& mask) {
  const auto n = states.rows();
  if (static_cast<Eigen::Index>(mask.size()) != n)
    throw ContractViolation("mask size does not match the number of candidates");
  std::vector<Eigen::Index> open;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!mask[static_cast<std::size_t>(i)]) open.push_back(i);
  if (open.empty()) throw ContractViolation("all candidates are masked");

  Eigen::MatrixXd rows(static_cast<Eigen::Index>(open.size()), states.cols());
  for (std::size_t r = 0; r < open.size(); ++r) rows.row(static_cast<Eigen::Index>(r)) = states.row(open[r]);
  const Eigen::VectorXd lp = log_softmax(mlp_forward(params, rows));
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(n);
  for (std::size_t r = 0; r < open.size(); ++r) probs(open[r]) = std::exp(lp(static_cast<Eigen::Index>(r)));
  return probs;
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

std::size_t sample_action(std::span<const double> probabilities, double u) {
  double cum = 0.0;
  std::size_t last_positive = probabilities.size();
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    if (!(probabilities[i] > 0.0)) continue;
    last_positive = i;
    cum += probabilities[i];
    if (u < cum) return i;
  }
  if (last_positive == probabilities.size())
    throw ContractViolation("cannot sample from a distribution without mass");
  // Rounding left the cumulative sum just below u.
  return last_positive;
}

std::size_t sample_action(std::span<const double> probabilities, std::mt19937_64& rng) {
  return sample_action(probabilities, uniform01(rng));
}

// ---------------------------------------------------------------------------
// Environment

SelectionEnv::SelectionEnv(const NormalizedScenario& normalized,
                           std::span<const double> complaint_scores)
    : pool_size_(normalized.size()), select_count_(normalized.select_count()) {
  const auto& sc = normalized.scenario;
  if (pool_size_ == 0) throw PreconditionError("empty candidate pool");
  if (select_count_ == 0 || select_count_ > pool_size_)
    throw PreconditionError("select_count must be in [1, pool size]");
  if (complaint_scores.size() != pool_size_)
    throw ContractViolation("complaint scores do not match the pool");
  const BoundingBox box = sc.bbox;
  diagonal_ = box.diagonal();
  positions_ = sc.positions();
  site_features_.resize(static_cast<Eigen::Index>(pool_size_), 7);
  for (std::size_t i = 0; i < pool_size_; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto& s = sc.sites[i];
    site_features_(r, 0) = normalized.t_hat[i];
    site_features_(r, 1) = normalized.u_hat[i];
    site_features_(r, 2) = normalized.e_hat[i];
    site_features_(r, 3) = std::clamp(complaint_scores[i], -10.0, 10.0) / 10.0;
    site_features_(r, 4) = s.key_area ? 1.0 : 0.0;
    site_features_(r, 5) = box.width() > 0.0 ? (s.position.x - box.min.x) / box.width() : 0.0;
    site_features_(r, 6) = box.height() > 0.0 ? (s.position.y - box.min.y) / box.height() : 0.0;
  }
}

Episode::Episode(const SelectionEnv& env)
    : env_(&env),
      selected_(env.pool_size(), false),
      nearest_(env.pool_size(), std::numeric_limits<double>::infinity()) {
  candidates_.resize(env.pool_size());
  for (std::size_t i = 0; i < candidates_.size(); ++i) candidates_[i] = i;
}

void Episode::fill_row(std::size_t site, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) const {
  row.head(7) = env_->site_features().row(static_cast<Eigen::Index>(site));
  double d = 1.0;
  if (count_ > 0) {
    const double diag = env_->diagonal();
    d = diag > 0.0 ? std::min(1.0, nearest_[site] / diag) : 0.0;
  }
  row(7) = d;
  row(8) = static_cast<double>(count_) / static_cast<double>(env_->select_count());
  row(9) = static_cast<double>(env_->pool_size() - count_) / static_cast<double>(env_->pool_size());
}

Eigen::MatrixXd Episode::candidate_states() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(candidates_.size()), kStateDim);
  for (std::size_t r = 0; r < candidates_.size(); ++r)
    fill_row(candidates_[r], x.row(static_cast<Eigen::Index>(r)));
  return x;
}

Eigen::MatrixXd Episode::all_states() const {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(env_->pool_size()), kStateDim);
  for (std::size_t i = 0; i < env_->pool_size(); ++i) fill_row(i, x.row(static_cast<Eigen::Index>(i)));
  return x;
}

void Episode::select(std::size_t site) {
  if (site >= selected_.size()) throw ContractViolation("site index out of range");
  if (selected_[site]) throw ContractViolation("site selected twice");
  if (done()) throw ContractViolation("episode already complete");
  selected_[site] = true;
  ++count_;
  candidates_.erase(std::find(candidates_.begin(), candidates_.end(), site));
  const auto& pos = env_->positions();
  for (std::size_t j = 0; j < selected_.size(); ++j)
    nearest_[j] = std::min(nearest_[j], distance(pos[j], pos[site]));
}

// ---------------------------------------------------------------------------
// Rollouts

Trajectory rollout(const PolicyParams& params, const SelectionEnv& env, std::mt19937_64& rng) {
  Trajectory traj;
  Episode ep(env);
  traj.actions.reserve(env.select_count());
  traj.old_log_probs.reserve(env.select_count());
  while (!ep.done()) {
    const Eigen::VectorXd lp = log_softmax(mlp_forward(params, ep.candidate_states()));
    const Eigen::VectorXd p = lp.array().exp();
    const std::size_t r = sample_action(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())), rng);
    const std::size_t site = ep.candidates()[r];
    traj.actions.push_back(site);
    traj.old_log_probs.push_back(lp(static_cast<Eigen::Index>(r)));
    ep.select(site);
  }
  return traj;
}

Trajectory greedy_decode(const PolicyParams& params, const SelectionEnv& env) {
  Trajectory traj;
  Episode ep(env);
  while (!ep.done()) {
    const Eigen::VectorXd lp = log_softmax(mlp_forward(params, ep.candidate_states()));
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < lp.size(); ++r)
      if (lp(r) > lp(best)) best = r;
    const std::size_t site = ep.candidates()[static_cast<std::size_t>(best)];
    traj.actions.push_back(site);
    traj.old_log_probs.push_back(lp(best));
    ep.select(site);
  }
  return traj;
}

void check_trajectory(const SelectionEnv& env, const Trajectory& trajectory) {
  if (trajectory.actions.size() != env.select_count())
    throw ContractViolation("trajectory length differs from select_count");
  std::vector<bool> seen(env.pool_size(), false);
  for (auto a : trajectory.actions) {
    if (a >= env.pool_size()) throw ContractViolation("trajectory action out of range");
    if (seen[a]) throw ContractViolation("trajectory repeats a site");
    seen[a] = true;
  }
}

LogProbGrad log_prob_and_grad(const PolicyParams& params, const SelectionEnv& env,
                              const Trajectory& trajectory, std::span<const double> coefficients) {
  check_trajectory(env, trajectory);
  if (coefficients.size() != trajectory.actions.size())
    throw ContractViolation("one coefficient per step is required");
  LogProbGrad out{{}, params.zeros_like()};
  out.log_probs.reserve(trajectory.actions.size());
  Episode ep(env);
  ForwardCache cache;
  for (std::size_t t = 0; t < trajectory.actions.size(); ++t) {
    const std::size_t site = trajectory.actions[t];
    const auto& cand = ep.candidates();
    const auto r = static_cast<Eigen::Index>(std::lower_bound(cand.begin(), cand.end(), site) - cand.begin());
    const Eigen::VectorXd lp = log_softmax(mlp_forward(params, ep.candidate_states(), &cache));
    out.log_probs.push_back(lp(r));
    if (coefficients[t] != 0.0) {
      // d log p_a / d z = e_a - p
      Eigen::VectorXd dz = -coefficients[t] * lp.array().exp().matrix();
      dz(r) += coefficients[t];
      mlp_backward(params, cache, dz, out.grad);
    }
    ep.select(site);
  }
  return out;
}

}  // namespace teleplan
