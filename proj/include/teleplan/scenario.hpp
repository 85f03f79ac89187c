#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace teleplan {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Point& a, const Point& b);

struct BoundingBox {
  Point min;
  Point max;

  Point center() const { return {0.5 * (min.x + max.x), 0.5 * (min.y + max.y)}; }
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  double diagonal() const;

  static BoundingBox of(std::span<const Point> points);
};

// Geographic origin of the planar frame.
struct GeoAnchor {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
};

// Local equirectangular projection around a fixed anchor. Accurate to well
// under a meter over city-scale extents.
class LocalProjection {
 public:
  explicit LocalProjection(GeoAnchor anchor) : anchor_(anchor) {}

  Point to_planar(double lat_deg, double lon_deg) const;
  GeoAnchor to_geo(const Point& p) const;
  const GeoAnchor& anchor() const { return anchor_; }

 private:
  GeoAnchor anchor_;
};

struct CandidateSite {
  std::string id;
  Point position;              // meters in the scenario's planar frame
  double throughput_mbps = 0;  // expected carried traffic
  std::int64_t users = 0;      // users within reach
  double rent = 0;             // yearly rental fee
  bool key_area = false;
  std::string complaints_text;
  std::string marketer_text;
  std::string region_text;
};

// A candidate pool together with how many sites must be picked from it.
struct Scenario {
  std::vector<CandidateSite> sites;
  std::size_t select_count = 0;
  BoundingBox bbox;
  GeoAnchor anchor;
  std::optional<std::vector<std::string>> planted_optimum;
  std::optional<std::vector<std::string>> actual_built;

  std::size_t size() const { return sites.size(); }

  // Index of `id`, throws LookupError when absent.
  std::size_t index_of(const std::string& id) const;
  std::vector<std::size_t> indices_of(std::span<const std::string> ids) const;
  std::vector<std::string> ids_of(std::span<const std::size_t> indices) const;

  // planted_optimum in synthetic mode, actual_built in dataset mode.
  const std::optional<std::vector<std::string>>& reference_selection() const;

  std::vector<Point> positions() const;
  // Recomputes bbox from the site positions.
  void refresh_bbox();
};

enum class ScenarioProfile { kUniform, kUrbanCluster };

ScenarioProfile parse_profile(const std::string& name);
std::string to_string(ScenarioProfile profile);

// Deterministic synthetic pool. The urban-cluster profile plants 3-6
// demand hotspots and records the best stage-1 sites inside them as
// `planted_optimum`.
Scenario generate_scenario(std::uint64_t seed, std::size_t n_candidates,
                           std::size_t select_count, ScenarioProfile profile);

// Per-site min-max scaled features. t_hat: throughput, u_hat: users,
// e_hat: rent.
struct FeatureBounds {
  double min = 0.0;
  double max = 0.0;

  double scale(double v) const;
  double unscale(double v) const;
};

struct NormalizedScenario {
  Scenario scenario;
  std::vector<double> t_hat;
  std::vector<double> u_hat;
  std::vector<double> e_hat;
  FeatureBounds throughput_bounds;
  FeatureBounds users_bounds;
  FeatureBounds rent_bounds;

  std::size_t size() const { return scenario.size(); }
  std::size_t select_count() const { return scenario.select_count; }
};

NormalizedScenario normalize_features(const Scenario& scenario);

// Returns one human-readable line per violated invariant.
std::vector<std::string> validate_scenario(const Scenario& scenario);

// Canonical field name -> source column name. Unmapped fields use their
// canonical name.
struct ColumnMapping {
  std::map<std::string, std::string> columns;

  std::string source_for(const std::string& canonical) const;
  static ColumnMapping from_json(const nlohmann::json& j);
  static ColumnMapping load(const std::string& path);
};

// Canonical CSV header, in file order.
const std::vector<std::string>& scenario_columns();

// Reads CSV (RFC 4180) or a JSON array of records, chosen by extension.
// `select_count` falls back to the number of `selected=true` rows when 0.
Scenario load_scenario(const std::string& path, const ColumnMapping& mapping = {},
                       std::size_t select_count = 0);
Scenario parse_scenario_csv(const std::string& text, const ColumnMapping& mapping = {},
                            std::size_t select_count = 0);
Scenario parse_scenario_json(const nlohmann::json& records,
                             const ColumnMapping& mapping = {},
                             std::size_t select_count = 0);

// `selected` marks actual_built when present, else planted_optimum.
std::string scenario_to_csv(const Scenario& scenario);
nlohmann::json scenario_to_json(const Scenario& scenario);
void save_scenario(const Scenario& scenario, const std::string& path);

}  // namespace teleplan
