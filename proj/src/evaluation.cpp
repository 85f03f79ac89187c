#include "teleplan/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "teleplan/error.hpp"
#include "teleplan/policy.hpp"

namespace teleplan {

double overlap(std::span<const std::string> planned, std::span<const std::string> reference) {
  if (planned.empty() || planned.size() != reference.size())
    throw PreconditionError("overlap needs equal-sized non-empty sets (" +
                            std::to_string(planned.size()) + " vs " +
                            std::to_string(reference.size()) + ")");
  const std::set<std::string> ref(reference.begin(), reference.end());
  const std::set<std::string> plan(planned.begin(), planned.end());
  std::size_t shared = 0;
  for (const auto& id : plan) shared += ref.count(id);
  return static_cast<double>(shared) / static_cast<double>(planned.size());
}

namespace {

double stage3_combined(std::span<const std::size_t> sel, const NormalizedScenario& normalized,
                       std::span<const double> complaints, const RewardWeights& weights,
                       const SemanticScorer& scorer) {
  const auto terms = set_terms(sel, normalized, complaints, weights.sigma_m);
  const double r = stage_reward(terms, Stage::kThree, weights);
  return combined_reward(r, scorer.score_selection(sel, normalized.scenario), weights);
}

}  // namespace

double selection_reward(std::span<const std::string> plan, const NormalizedScenario& normalized,
                        const RewardWeights& weights, const SemanticScorer& scorer) {
  const auto idx = normalized.scenario.indices_of(plan);
  const auto complaints = complaint_scores(normalized.scenario, scorer);
  return stage3_combined(idx, normalized, complaints, weights, scorer);
}

std::vector<std::string> plan_greedy(const NormalizedScenario& normalized,
                                     const RewardWeights& weights, const SemanticScorer& scorer) {
  const std::size_t n = normalized.size();
  const std::size_t k = normalized.select_count();
  if (k == 0 || k > n) throw PreconditionError("select_count must be in [1, pool size]");
  const auto complaints = complaint_scores(normalized.scenario, scorer);
  std::vector<std::size_t> chosen;
  std::vector<bool> used(n, false);
  std::vector<std::size_t> trial;
  while (chosen.size() < k) {
    std::size_t best = n;
    double best_value = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      trial = chosen;
      trial.push_back(i);
      const double v = stage3_combined(trial, normalized, complaints, weights, scorer);
      if (v > best_value) {
        best_value = v;
        best = i;
      }
    }
    used[best] = true;
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return normalized.scenario.ids_of(chosen);
}

std::vector<std::string> plan_kmeans(const NormalizedScenario& normalized, std::size_t k,
                                     std::uint64_t seed) {
  const auto& sc = normalized.scenario;
  const std::size_t n = sc.size();
  if (k == 0 || k > n) throw PreconditionError("k must be in [1, pool size]");
  const auto pos = sc.positions();
  std::vector<double> w(normalized.u_hat);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  if (!(wsum > 0.0)) std::fill(w.begin(), w.end(), 1.0);

  std::mt19937_64 rng(seed);
  auto d2 = [](const Point& a, const Point& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
  };
  // Weighted draw by inverse CDF over site order.
  auto draw = [&](const std::vector<double>& mass) {
    double total = 0.0;
    for (double m : mass) total += m;
    if (!(total > 0.0)) return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
    const double u = uniform01(rng) * total;
    double cum = 0.0;
    std::size_t last = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] <= 0.0) continue;
      last = i;
      cum += mass[i];
      if (u < cum) return i;
    }
    return last;
  };

  std::vector<Point> centers;
  centers.reserve(k);
  centers.push_back(pos[draw(w)]);
  std::vector<double> nearest(n);
  for (std::size_t i = 0; i < n; ++i) nearest[i] = d2(pos[i], centers[0]);
  while (centers.size() < k) {
    std::vector<double> mass(n);
    for (std::size_t i = 0; i < n; ++i) mass[i] = w[i] * nearest[i];
    const Point c = pos[draw(mass)];
    centers.push_back(c);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], d2(pos[i], c));
  }

  std::vector<std::size_t> assign(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = d2(pos[i], centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = d2(pos[i], centers[c]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      assign[i] = best;
    }
    std::vector<double> sx(k, 0.0), sy(k, 0.0), sw(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sx[assign[i]] += w[i] * pos[i].x;
      sy[assign[i]] += w[i] * pos[i].y;
      sw[assign[i]] += w[i];
    }
    for (std::size_t c = 0; c < k; ++c)
      if (sw[c] > 0.0) centers[c] = {sx[c] / sw[c], sy[c] / sw[c]};
  }

  std::vector<bool> used(n, false);
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  for (const auto& c : centers) {
    std::size_t best = n;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const double d = d2(pos[i], c);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    used[best] = true;
    chosen.push_back(best);
  }
  std::sort(chosen.begin(), chosen.end());
  return sc.ids_of(chosen);
}

std::vector<std::string> plan_random(const Scenario& scenario, std::size_t k, std::uint64_t seed) {
  const std::size_t n = scenario.size();
  if (k == 0 || k > n) throw PreconditionError("k must be in [1, pool size]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates with the library's own uniform draw for portability.
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n - i));
    std::swap(idx[i], idx[std::min(j, n - 1)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return scenario.ids_of(idx);
}

// ---------------------------------------------------------------------------
// Comparison

namespace {

void mean_std(const std::vector<double>& v, std::optional<double>& mean, std::optional<double>& sd) {
  if (v.empty()) return;
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  mean = m;
  sd = std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

ComparisonReport compare_runs(std::span<const RunInput> runs, const Scenario& scenario,
                              const CompareOptions& options) {
  if (runs.size() < 2) throw PreconditionError("compare_runs needs at least two runs");
  const auto scorer = options.scorer ? options.scorer : std::make_shared<MockScorer>();
  const auto normalized = normalize_features(scenario);
  const auto complaints = complaint_scores(scenario, *scorer);
  const auto& reference = scenario.reference_selection();
  const auto grid = GridSpec::covering(scenario.bbox, options.cell_size_m);

  ComparisonReport report;
  for (const auto& run : runs) {
    RunRow row;
    row.label = run.label;
    row.source = run.source;
    row.seed = run.seed;
    if (run.history) {
      row.final_reward = run.history->final_window_mean(options.window);
      row.reward_curve.reserve(run.history->records.size());
      for (const auto& r : run.history->records) row.reward_curve.push_back(r.mean_reward);
    }
    if (!run.plan.empty()) {
      const auto idx = scenario.indices_of(run.plan);
      if (reference) row.overlap = overlap(run.plan, *reference);
      row.plan_reward = stage3_combined(idx, normalized, complaints, options.weights, *scorer);
      if (options.with_coverage) {
        std::vector<Point> pts;
        for (auto i : idx) pts.push_back(scenario.sites[i].position);
        row.coverage = coverage_stats(rsrp_grid(pts, grid, options.radio, options.threads));
      }
    }
    report.rows.push_back(std::move(row));
  }

  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRow*>> groups;
  for (const auto& row : report.rows) {
    if (!groups.count(row.label)) order.push_back(row.label);
    groups[row.label].push_back(&row);
  }
  for (const auto& label : order) {
    PanelSummary p;
    p.label = label;
    p.runs = groups[label].size();
    std::vector<double> rewards, overlaps;
    for (const auto* r : groups[label]) {
      if (r->final_reward) rewards.push_back(*r->final_reward);
      if (r->overlap) overlaps.push_back(*r->overlap);
    }
    mean_std(rewards, p.final_reward_mean, p.final_reward_std);
    mean_std(overlaps, p.overlap_mean, p.overlap_std);
    report.panels.push_back(p);
  }
  return report;
}

namespace {

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string opt_cell(const std::optional<double>& v) { return v ? csv::format_double(*v) : ""; }

}  // namespace

nlohmann::json report_to_json(const ComparisonReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"label", r.label},
                    {"source", r.source},
                    {"seed", r.seed},
                    {"final_reward", opt(r.final_reward)},
                    {"reward_curve", r.reward_curve},
                    {"overlap", opt(r.overlap)},
                    {"plan_reward", opt(r.plan_reward)},
                    {"coverage", r.coverage ? coverage_to_json(*r.coverage) : nlohmann::json(nullptr)}});
  }
  nlohmann::json panels = nlohmann::json::array();
  for (const auto& p : report.panels) {
    panels.push_back({{"label", p.label},
                      {"runs", p.runs},
                      {"final_reward_mean", opt(p.final_reward_mean)},
                      {"final_reward_std", opt(p.final_reward_std)},
                      {"overlap_mean", opt(p.overlap_mean)},
                      {"overlap_std", opt(p.overlap_std)}});
  }
  return {{"runs", rows}, {"panels", panels}};
}

std::string report_to_csv(const ComparisonReport& report) {
  std::string out =
      "label,source,seed,final_reward,overlap,plan_reward,frac_above_-80dbm,frac_above_-60dbm\n";
  for (const auto& r : report.rows) {
    std::optional<double> f80, f60;
    if (r.coverage) {
      f80 = r.coverage->frac_above_80;
      f60 = r.coverage->frac_above_60;
    }
    out += csv::format_row({r.label, r.source, std::to_string(r.seed), opt_cell(r.final_reward),
                            opt_cell(r.overlap), opt_cell(r.plan_reward), opt_cell(f80),
                            opt_cell(f60)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// GeoJSON

nlohmann::json plan_to_geojson(std::span<const std::string> plan, const Scenario& scenario) {
  const std::set<std::string> selected(plan.begin(), plan.end());
  for (const auto& id : selected) (void)scenario.index_of(id);
  std::set<std::string> reference;
  if (const auto& ref = scenario.reference_selection()) reference.insert(ref->begin(), ref->end());
  const LocalProjection proj(scenario.anchor);
  nlohmann::json features = nlohmann::json::array();
  for (const auto& s : scenario.sites) {
    const auto geo = proj.to_geo(s.position);
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {geo.lon_deg, geo.lat_deg}}}},
                        {"properties",
                         {{"id", s.id},
                          {"selected", selected.count(s.id) > 0},
                          {"in_reference", reference.count(s.id) > 0}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

void export_geojson(std::span<const std::string> plan, const Scenario& scenario,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write " + path);
  out << plan_to_geojson(plan, scenario).dump(2) << '\n';
}

}  // namespace teleplan
