#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "teleplan/scenario.hpp"

namespace teleplan {

// Weights of the staged reward and of its combination with the semantic
// score. w1/w2 and sigma are local choices.
struct RewardWeights {
  double w_t = 10.0;
  double w_u = 12.0;
  double w_s = 0.2;
  double w_m = 5.0;
  double w_e = 4.0;
  double w_k = 8.0;
  double w1 = 1.0;
  double w2 = 1.0;
  double sigma_m = 500.0;  // cluster length scale
};

void to_json(nlohmann::json& j, const RewardWeights& w);
void from_json(const nlohmann::json& j, RewardWeights& w);

// Curriculum stage of the reward.
enum class Stage : int { kOne = 1, kTwo = 2, kThree = 3 };

Stage stage_from_int(int stage);

// Set-level reward drivers: means of the per-site normalized features
// (m is the complaint score divided by 10) and the cluster term.
struct RewardTerms {
  double t = 0.0;
  double u = 0.0;
  double m = 0.0;
  double e = 0.0;
  double k = 0.0;
};

struct RewardBreakdown {
  RewardTerms terms;
  Stage stage = Stage::kOne;
  double r = 0.0;          // staged reward
  double llm_score = 0.0;  // semantic score in [0, 10]
  double combined = 0.0;   // w1 * r + w2 * llm_score
};

// Scores the parts of a plan that are not numeric features. Implementations
// must be safe to call concurrently.
class SemanticScorer {
 public:
  virtual ~SemanticScorer() = default;

  // Plan quality in [0, 10].
  virtual double score_selection(std::span<const std::size_t> selection,
                                 const Scenario& scenario) const = 0;
  // Complaint grading in [-10, 10]; positive = objection to building.
  virtual double score_complaint(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

// Keyword table of the mock complaint grader, in matching order.
struct ComplaintKeyword {
  std::string_view keyword;
  double value;
};
std::span<const ComplaintKeyword> complaint_keywords();

// Sum of matched keyword values (case-insensitive substring, each keyword at
// most once), clamped to [-10, 10].
double mock_complaint_score(std::string_view text);

// Deterministic proxy for the semantic plan score:
// 10 * clamp(0.4 * key_area_fraction + 0.3 * spatial_balance
//            + 0.3 * (1 - objection_fraction), 0, 1).
double mock_semantic_score(std::span<const std::size_t> selection, const Scenario& scenario);

// 1 - (max quadrant share - 0.25) / 0.75 over the bbox quadrants.
double spatial_balance(std::span<const std::size_t> selection, const Scenario& scenario);

class MockScorer final : public SemanticScorer {
 public:
  double score_selection(std::span<const std::size_t> selection,
                         const Scenario& scenario) const override {
    return mock_semantic_score(selection, scenario);
  }
  double score_complaint(std::string_view text) const override {
    return mock_complaint_score(text);
  }
  std::string name() const override { return "mock"; }
};

struct RemoteScorerConfig {
  std::string url;             // e.g. http://localhost:8080/score
  double timeout_s = 10.0;
};

// Scoring instruction filled with the selected site records.
std::string render_scoring_prompt(std::span<const std::size_t> selection,
                                  const Scenario& scenario);

// Extracts the number after a line starting with "Score:". Returns nullopt
// when absent, unparsable or outside [0, 10].
std::optional<double> parse_score_response(std::string_view body);

// POSTs {"prompt": ...} to an HTTP endpoint and parses "Score: <x>" from the
// reply. Any network or parse failure falls back to the mock score and bumps
// `fallback_count()`. Complaint grading always uses the keyword table.
class RemoteScorer final : public SemanticScorer {
 public:
  explicit RemoteScorer(RemoteScorerConfig config);

  double score_selection(std::span<const std::size_t> selection,
                         const Scenario& scenario) const override;
  double score_complaint(std::string_view text) const override {
    return mock_complaint_score(text);
  }
  std::string name() const override { return "remote"; }

  std::uint64_t fallback_count() const { return fallbacks_.load(); }
  std::uint64_t request_count() const { return requests_.load(); }
  const RemoteScorerConfig& config() const { return config_; }

 private:
  RemoteScorerConfig config_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  mutable std::atomic<std::uint64_t> fallbacks_{0};
  mutable std::atomic<std::uint64_t> requests_{0};
};

// ---------------------------------------------------------------------------
// Reward terms

// k = mean over selected sites of exp(-d_nn / sigma); 0 for a singleton.
double cluster_score(std::span<const std::size_t> selection, const Scenario& scenario,
                     double sigma_m);
double cluster_score(std::span<const std::string> selection, const Scenario& scenario,
                     double sigma_m);

// `complaint_scores` are per-site grades in [-10, 10].
RewardTerms set_terms(std::span<const std::size_t> selection, const NormalizedScenario& normalized,
                      std::span<const double> complaint_scores, double sigma_m);
RewardTerms set_terms(std::span<const std::size_t> selection, const NormalizedScenario& normalized,
                      const SemanticScorer& scorer, double sigma_m = RewardWeights{}.sigma_m);
RewardTerms set_terms(std::span<const std::string> selection, const NormalizedScenario& normalized,
                      const SemanticScorer& scorer, double sigma_m = RewardWeights{}.sigma_m);

std::vector<double> complaint_scores(const Scenario& scenario, const SemanticScorer& scorer);

// Staged reward; later stages embed the earlier ones scaled by w_s.
double stage_reward(const RewardTerms& terms, Stage stage, const RewardWeights& weights);

// Counters for recoverable anomalies seen while computing rewards.
struct RewardDiagnostics {
  std::atomic<std::uint64_t> clamped_llm_scores{0};
};

// w1 * r + w2 * clamp(llm_score, 0, 10). Clamping increments `diagnostics`.
double combined_reward(double r, double llm_score, const RewardWeights& weights,
                       RewardDiagnostics* diagnostics = nullptr);

// Full reward pipeline for one scenario with per-selection caching of the
// semantic score. Thread-safe.
class RewardModel {
 public:
  RewardModel(const NormalizedScenario& normalized, RewardWeights weights,
              std::shared_ptr<const SemanticScorer> scorer);

  RewardBreakdown evaluate(std::span<const std::size_t> selection, Stage stage) const;
  RewardTerms terms(std::span<const std::size_t> selection) const;
  double semantic_score(std::span<const std::size_t> selection) const;

  const NormalizedScenario& normalized() const { return normalized_; }
  const RewardWeights& weights() const { return weights_; }
  const SemanticScorer& scorer() const { return *scorer_; }
  std::span<const double> site_complaint_scores() const { return complaints_; }
  const RewardDiagnostics& diagnostics() const { return diagnostics_; }
  std::size_t cache_size() const;

 private:
  NormalizedScenario normalized_;
  RewardWeights weights_;
  std::shared_ptr<const SemanticScorer> scorer_;
  std::vector<double> complaints_;
  mutable RewardDiagnostics diagnostics_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::vector<std::size_t>, double> semantic_cache_;
};

}  // namespace teleplan
