#include "teleplan/reward.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "teleplan/error.hpp"

namespace teleplan {

void to_json(nlohmann::json& j, const RewardWeights& w) {
  j = {{"w_t", w.w_t}, {"w_u", w.w_u}, {"w_s", w.w_s}, {"w_m", w.w_m}, {"w_e", w.w_e},
       {"w_k", w.w_k}, {"w1", w.w1},   {"w2", w.w2},   {"sigma_m", w.sigma_m}};
}

void from_json(const nlohmann::json& j, RewardWeights& w) {
  const RewardWeights d;
  w.w_t = j.value("w_t", d.w_t);
  w.w_u = j.value("w_u", d.w_u);
  w.w_s = j.value("w_s", d.w_s);
  w.w_m = j.value("w_m", d.w_m);
  w.w_e = j.value("w_e", d.w_e);
  w.w_k = j.value("w_k", d.w_k);
  w.w1 = j.value("w1", d.w1);
  w.w2 = j.value("w2", d.w2);
  w.sigma_m = j.value("sigma_m", d.sigma_m);
}

Stage stage_from_int(int stage) {
  if (stage < 1 || stage > 3) throw PreconditionError("stage must be 1, 2 or 3");
  return static_cast<Stage>(stage);
}

// ---------------------------------------------------------------------------
// Mock semantic scorer

namespace {

constexpr std::array<ComplaintKeyword, 7> kKeywords = {{
    {"radiation", 6.0},
    {"oppose construction", 8.0},
    {"noise", 3.0},
    {"no signal", -5.0},
    {"please build", -4.0},
    {"call drops", -4.0},
    {"slow data", -3.0},
}};

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::span<const ComplaintKeyword> complaint_keywords() { return kKeywords; }

double mock_complaint_score(std::string_view text) {
  if (text.empty()) return 0.0;
  const std::string haystack = ascii_lower(text);
  double total = 0.0;
  for (const auto& kw : kKeywords) {
    if (haystack.find(kw.keyword) != std::string::npos) total += kw.value;
  }
  return std::clamp(total, -10.0, 10.0);
}

double spatial_balance(std::span<const std::size_t> selection, const Scenario& scenario) {
  if (selection.empty()) throw PreconditionError("selection must be non-empty");
  const Point c = scenario.bbox.center();
  std::array<std::size_t, 4> counts{};
  for (auto i : selection) {
    const auto& p = scenario.sites.at(i).position;
    const std::size_t q = (p.x >= c.x ? 1u : 0u) + (p.y >= c.y ? 2u : 0u);
    ++counts[q];
  }
  const double max_share = static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
                           static_cast<double>(selection.size());
  return 1.0 - (max_share - 0.25) / 0.75;
}

double mock_semantic_score(std::span<const std::size_t> selection, const Scenario& scenario) {
  if (selection.empty()) throw PreconditionError("selection must be non-empty");
  std::size_t key = 0;
  std::size_t objections = 0;
  for (auto i : selection) {
    const auto& s = scenario.sites.at(i);
    if (s.key_area) ++key;
    if (mock_complaint_score(s.complaints_text) > 0.0) ++objections;
  }
  const double n = static_cast<double>(selection.size());
  const double raw = 0.4 * (static_cast<double>(key) / n) + 0.3 * spatial_balance(selection, scenario) +
                     0.3 * (1.0 - static_cast<double>(objections) / n);
  return 10.0 * std::clamp(raw, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Remote scorer

std::string render_scoring_prompt(std::span<const std::size_t> selection,
                                  const Scenario& scenario) {
  std::ostringstream p;
  p << "You are reviewing a proposed set of new cell sites. The rows below list each "
       "chosen site with its position, expected traffic, user count, yearly rent, whether it "
       "lies in a priority zone, and any free-text notes (subscriber complaints, sales team "
       "requests, local growth remarks).\n"
       "Rate the set as a whole from 0 (unusable) to 10 (excellent). Numeric traffic and cost "
       "terms are handled elsewhere; weigh instead:\n"
       "- how evenly the sites spread over homes, campuses, clinics and similar demand,\n"
       "- whether priority zones are served,\n"
       "- likely subscriber sentiment given the complaint notes and growth remarks,\n"
       "- how well the set answers the sales team requests.\n"
       "Reply with exactly two lines:\n"
       "Score: <number from 0 to 10>\n"
       "Reasoning: <one or two sentences>\n"
       "\nSites:\n"
       "id,x_m,y_m,throughput_mbps,users,rent,key_area,complaints,marketer,region\n";
  for (auto i : selection) {
    const auto& s = scenario.sites.at(i);
    p << s.id << ',' << std::lround(s.position.x) << ',' << std::lround(s.position.y) << ','
      << s.throughput_mbps << ',' << s.users << ',' << s.rent << ','
      << (s.key_area ? "yes" : "no") << ",\"" << s.complaints_text << "\",\""
      << s.marketer_text << "\",\"" << s.region_text << "\"\n";
  }
  return p.str();
}

std::optional<double> parse_score_response(std::string_view body) {
  std::size_t pos = 0;
  while (pos <= body.size()) {
    const auto eol = body.find('\n', pos);
    std::string_view line = body.substr(pos, eol == std::string_view::npos ? body.npos : eol - pos);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
      line.remove_prefix(1);
    constexpr std::string_view kTag = "Score:";
    if (line.substr(0, kTag.size()) == kTag) {
      line.remove_prefix(kTag.size());
      while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
        line.remove_prefix(1);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
      if (ec != std::errc() || ptr == line.data()) return std::nullopt;
      // Allow "8/10" or trailing prose, but not "8x".
      if (ptr != line.data() + line.size() && std::isalnum(static_cast<unsigned char>(*ptr)))
        return std::nullopt;
      if (!std::isfinite(v) || v < 0.0 || v > 10.0) return std::nullopt;
      return v;
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  return std::nullopt;
}

RemoteScorer::RemoteScorer(RemoteScorerConfig config) : config_(std::move(config)) {
  std::string_view url = config_.url;
  constexpr std::string_view kScheme = "http://";
  if (url.substr(0, kScheme.size()) != kScheme)
    throw PreconditionError("remote scorer URL must start with http://: " + config_.url);
  url.remove_prefix(kScheme.size());
  const auto slash = url.find('/');
  std::string_view authority = url.substr(0, slash);
  path_ = slash == std::string_view::npos ? "/" : std::string(url.substr(slash));
  const auto colon = authority.rfind(':');
  if (colon != std::string_view::npos) {
    host_ = std::string(authority.substr(0, colon));
    const auto port_str = authority.substr(colon + 1);
    auto [ptr, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port_);
    if (ec != std::errc() || ptr != port_str.data() + port_str.size())
      throw PreconditionError("invalid port in remote scorer URL: " + config_.url);
  } else {
    host_ = std::string(authority);
  }
  if (host_.empty()) throw PreconditionError("remote scorer URL has no host: " + config_.url);
  if (!(config_.timeout_s > 0.0)) throw PreconditionError("remote scorer timeout must be > 0");
}

double RemoteScorer::score_selection(std::span<const std::size_t> selection,
                                     const Scenario& scenario) const {
  ++requests_;
  // One client per call: concurrent rollouts never share a connection.
  httplib::Client client(host_, port_);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(config_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const nlohmann::json body = {{"prompt", render_scoring_prompt(selection, scenario)}};
  if (auto res = client.Post(path_, body.dump(), "application/json")) {
    if (res->status == 200) {
      if (auto score = parse_score_response(res->body)) return *score;
    }
  }
  ++fallbacks_;
  return mock_semantic_score(selection, scenario);
}

// ---------------------------------------------------------------------------
// Reward terms

double cluster_score(std::span<const std::size_t> selection, const Scenario& scenario,
                     double sigma_m) {
  if (selection.empty()) throw PreconditionError("selection must be non-empty");
  if (!(sigma_m > 0.0)) throw PreconditionError("cluster sigma must be positive");
  if (selection.size() == 1) return 0.0;
  double total = 0.0;
  for (auto i : selection) {
    const auto& pi = scenario.sites.at(i).position;
    double nearest = std::numeric_limits<double>::infinity();
    for (auto j : selection) {
      if (j == i) continue;
      nearest = std::min(nearest, distance(pi, scenario.sites.at(j).position));
    }
    total += std::exp(-nearest / sigma_m);
  }
  return total / static_cast<double>(selection.size());
}

double cluster_score(std::span<const std::string> selection, const Scenario& scenario,
                     double sigma_m) {
  const auto idx = scenario.indices_of(selection);
  return cluster_score(idx, scenario, sigma_m);
}

std::vector<double> complaint_scores(const Scenario& scenario, const SemanticScorer& scorer) {
  std::vector<double> out;
  out.reserve(scenario.sites.size());
  for (const auto& s : scenario.sites)
    out.push_back(std::clamp(scorer.score_complaint(s.complaints_text), -10.0, 10.0));
  return out;
}

RewardTerms set_terms(std::span<const std::size_t> selection, const NormalizedScenario& normalized,
                      std::span<const double> complaint_scores, double sigma_m) {
  if (selection.empty()) throw PreconditionError("selection must be non-empty");
  RewardTerms terms;
  for (auto i : selection) {
    if (i >= normalized.size()) throw LookupError("site index out of range: " + std::to_string(i));
    terms.t += normalized.t_hat[i];
    terms.u += normalized.u_hat[i];
    terms.e += normalized.e_hat[i];
    terms.m += complaint_scores[i] / 10.0;
  }
  const double n = static_cast<double>(selection.size());
  terms.t /= n;
  terms.u /= n;
  terms.e /= n;
  terms.m /= n;
  terms.k = cluster_score(selection, normalized.scenario, sigma_m);
  return terms;
}

RewardTerms set_terms(std::span<const std::size_t> selection, const NormalizedScenario& normalized,
                      const SemanticScorer& scorer, double sigma_m) {
  const auto scores = complaint_scores(normalized.scenario, scorer);
  return set_terms(selection, normalized, scores, sigma_m);
}

RewardTerms set_terms(std::span<const std::string> selection, const NormalizedScenario& normalized,
                      const SemanticScorer& scorer, double sigma_m) {
  const auto idx = normalized.scenario.indices_of(selection);
  return set_terms(idx, normalized, scorer, sigma_m);
}

double stage_reward(const RewardTerms& terms, Stage stage, const RewardWeights& w) {
  const double r1 = w.w_t * terms.t + w.w_u * terms.u;
  if (stage == Stage::kOne) return r1;
  const double r2 = w.w_s * r1 - w.w_m * terms.m - w.w_e * terms.e;
  if (stage == Stage::kTwo) return r2;
  if (stage == Stage::kThree) return w.w_s * r2 + w.w_k * terms.k;
  throw PreconditionError("invalid reward stage");
}

double combined_reward(double r, double llm_score, const RewardWeights& weights,
                       RewardDiagnostics* diagnostics) {
  double llm = llm_score;
  if (!(llm >= 0.0 && llm <= 10.0)) {
    llm = std::isnan(llm) ? 0.0 : std::clamp(llm, 0.0, 10.0);
    if (diagnostics) ++diagnostics->clamped_llm_scores;
  }
  return weights.w1 * r + weights.w2 * llm;
}

// ---------------------------------------------------------------------------
// RewardModel

RewardModel::RewardModel(const NormalizedScenario& normalized, RewardWeights weights,
                         std::shared_ptr<const SemanticScorer> scorer)
    : normalized_(normalized), weights_(weights), scorer_(std::move(scorer)) {
  if (!scorer_) scorer_ = std::make_shared<MockScorer>();
  complaints_ = complaint_scores(normalized_.scenario, *scorer_);
}

RewardTerms RewardModel::terms(std::span<const std::size_t> selection) const {
  return set_terms(selection, normalized_, complaints_, weights_.sigma_m);
}

double RewardModel::semantic_score(std::span<const std::size_t> selection) const {
  std::vector<std::size_t> key(selection.begin(), selection.end());
  std::sort(key.begin(), key.end());
  {
    std::lock_guard lock(cache_mutex_);
    auto it = semantic_cache_.find(key);
    if (it != semantic_cache_.end()) return it->second;
  }
  const double score = scorer_->score_selection(key, normalized_.scenario);
  std::lock_guard lock(cache_mutex_);
  semantic_cache_.emplace(std::move(key), score);
  return score;
}

RewardBreakdown RewardModel::evaluate(std::span<const std::size_t> selection, Stage stage) const {
  RewardBreakdown out;
  out.terms = terms(selection);
  out.stage = stage;
  out.r = stage_reward(out.terms, stage, weights_);
  const double raw = semantic_score(selection);
  out.combined = combined_reward(out.r, raw, weights_, &diagnostics_);
  out.llm_score = std::clamp(std::isnan(raw) ? 0.0 : raw, 0.0, 10.0);
  return out;
}

std::size_t RewardModel::cache_size() const {
  std::lock_guard lock(cache_mutex_);
  return semantic_cache_.size();
}

}  // namespace teleplan
