#include "teleplan/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "teleplan/error.hpp"

namespace teleplan {

namespace {

constexpr double kEarthRadiusM = 6371008.8;
constexpr double kDegToRad = std::numbers::pi / 180.0;

// Default geographic origin for synthetic scenarios.
constexpr GeoAnchor kSyntheticAnchor{32.0, 118.8};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

double BoundingBox::diagonal() const { return std::hypot(width(), height()); }

BoundingBox BoundingBox::of(std::span<const Point> points) {
  if (points.empty()) return {};
  BoundingBox box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min.x = std::min(box.min.x, p.x);
    box.min.y = std::min(box.min.y, p.y);
    box.max.x = std::max(box.max.x, p.x);
    box.max.y = std::max(box.max.y, p.y);
  }
  return box;
}

Point LocalProjection::to_planar(double lat_deg, double lon_deg) const {
  const double cos_lat0 = std::cos(anchor_.lat_deg * kDegToRad);
  return {kEarthRadiusM * (lon_deg - anchor_.lon_deg) * kDegToRad * cos_lat0,
          kEarthRadiusM * (lat_deg - anchor_.lat_deg) * kDegToRad};
}

GeoAnchor LocalProjection::to_geo(const Point& p) const {
  const double cos_lat0 = std::cos(anchor_.lat_deg * kDegToRad);
  return {anchor_.lat_deg + p.y / kEarthRadiusM / kDegToRad,
          anchor_.lon_deg + p.x / (kEarthRadiusM * cos_lat0) / kDegToRad};
}

// ---------------------------------------------------------------------------
// Scenario

std::size_t Scenario::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i].id == id) return i;
  }
  throw LookupError("unknown site id: " + id);
}

std::vector<std::size_t> Scenario::indices_of(std::span<const std::string> ids) const {
  std::unordered_map<std::string, std::size_t> lookup;
  lookup.reserve(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) lookup.emplace(sites[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = lookup.find(id);
    if (it == lookup.end()) throw LookupError("unknown site id: " + id);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> Scenario::ids_of(std::span<const std::size_t> indices) const {
  std::vector<std::string> out;
  out.reserve(indices.size());
  for (auto i : indices) {
    if (i >= sites.size()) throw LookupError("site index out of range: " + std::to_string(i));
    out.push_back(sites[i].id);
  }
  return out;
}

const std::optional<std::vector<std::string>>& Scenario::reference_selection() const {
  return actual_built ? actual_built : planted_optimum;
}

std::vector<Point> Scenario::positions() const {
  std::vector<Point> out;
  out.reserve(sites.size());
  for (const auto& s : sites) out.push_back(s.position);
  return out;
}

void Scenario::refresh_bbox() {
  const auto pts = positions();
  bbox = BoundingBox::of(pts);
}

ScenarioProfile parse_profile(const std::string& name) {
  if (name == "uniform") return ScenarioProfile::kUniform;
  if (name == "urban-cluster") return ScenarioProfile::kUrbanCluster;
  throw PreconditionError("unknown scenario profile: " + name);
}

std::string to_string(ScenarioProfile profile) {
  return profile == ScenarioProfile::kUniform ? "uniform" : "urban-cluster";
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

const std::vector<std::string> kDemandComplaints = {
    "no signal indoors", "frequent call drops", "slow data at peak hours",
    "please build a station here", "no signal; call drops near the mall"};
const std::vector<std::string> kObjectionComplaints = {
    "radiation concern from residents", "noise from rooftop equipment",
    "neighbours oppose construction"};
const std::vector<std::string> kMarketerHotspot = {
    "high 5G package demand", "enterprise customers requesting coverage",
    "campus users migrating to 5G"};
const std::vector<std::string> kMarketerQuiet = {"", "low sales priority",
                                                 "maintain existing 4G"};
const std::vector<std::string> kRegionHotspot = {"commercial district", "university campus",
                                                 "hospital area", "new residential towers"};
const std::vector<std::string> kRegionQuiet = {"suburban residential", "industrial park",
                                               "farmland edge", "lakeside"};

template <typename Rng>
const std::string& pick(const std::vector<std::string>& pool, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

struct Hotspot {
  Point center;
  double radius;
};

double round_to(double v, double step) { return std::round(v / step) * step; }

}  // namespace

Scenario generate_scenario(std::uint64_t seed, std::size_t n_candidates,
                           std::size_t select_count, ScenarioProfile profile) {
  if (select_count < 1) throw PreconditionError("select_count must be >= 1");
  if (n_candidates < select_count)
    throw PreconditionError("select_count (" + std::to_string(select_count) +
                            ") exceeds n_candidates (" + std::to_string(n_candidates) + ")");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double side = 250.0 * std::sqrt(static_cast<double>(n_candidates));

  const int width = static_cast<int>(std::to_string(n_candidates).size());
  auto make_id = [width](std::size_t i) {
    std::ostringstream ss;
    ss << 'S' << std::setw(width) << std::setfill('0') << i;
    return ss.str();
  };

  Scenario sc;
  sc.select_count = select_count;
  sc.anchor = kSyntheticAnchor;
  sc.sites.reserve(n_candidates);

  std::vector<double> density(n_candidates, 0.0);

  if (profile == ScenarioProfile::kUniform) {
    for (std::size_t i = 0; i < n_candidates; ++i) {
      CandidateSite s;
      s.id = make_id(i);
      s.position = {side * unit(rng), side * unit(rng)};
      s.throughput_mbps = round_to(10.0 + 190.0 * unit(rng), 0.01);
      s.users = static_cast<std::int64_t>(std::llround(50.0 + 1950.0 * unit(rng)));
      s.rent = std::round(20000.0 + 60000.0 * unit(rng));
      s.key_area = unit(rng) < 0.2;
      const double c = unit(rng);
      if (c < 0.2) {
        s.complaints_text = pick(kDemandComplaints, rng);
      } else if (c < 0.4) {
        s.complaints_text = pick(kObjectionComplaints, rng);
      }
      s.marketer_text = pick(unit(rng) < 0.5 ? kMarketerHotspot : kMarketerQuiet, rng);
      s.region_text = pick(unit(rng) < 0.5 ? kRegionHotspot : kRegionQuiet, rng);
      sc.sites.push_back(std::move(s));
    }
  } else {
    std::uniform_int_distribution<int> hotspot_count(3, 6);
    std::vector<Hotspot> hotspots(static_cast<std::size_t>(hotspot_count(rng)));
    for (auto& h : hotspots) {
      h.center = {side * (0.15 + 0.7 * unit(rng)), side * (0.15 + 0.7 * unit(rng))};
      h.radius = side * (0.04 + 0.04 * unit(rng));
    }
    const std::size_t n_hot = std::min(
        n_candidates, std::max(n_candidates / 2, select_count + (select_count + 3) / 4));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> which(0, hotspots.size() - 1);

    for (std::size_t i = 0; i < n_candidates; ++i) {
      CandidateSite s;
      s.id = make_id(i);
      if (i < n_hot) {
        const auto& h = hotspots[which(rng)];
        s.position = {std::clamp(h.center.x + h.radius * gauss(rng), 0.0, side),
                      std::clamp(h.center.y + h.radius * gauss(rng), 0.0, side)};
      } else {
        s.position = {side * unit(rng), side * unit(rng)};
      }
      double d = 0.0;
      for (const auto& h : hotspots) {
        const double r = distance(s.position, h.center) / h.radius;
        d = std::max(d, std::exp(-0.5 * r * r));
      }
      density[i] = d;

      s.throughput_mbps = round_to(std::max(0.0, 20.0 + 180.0 * d + 15.0 * gauss(rng)), 0.01);
      s.users = std::max<std::int64_t>(
          0, std::llround(100.0 + 1900.0 * d + 150.0 * gauss(rng)));
      s.rent = std::round(20000.0 + 40000.0 * d + 20000.0 * unit(rng));
      s.key_area = unit(rng) < 0.1 + 0.5 * d;
      const double c = unit(rng);
      if (c < 0.15 + 0.5 * d) {
        s.complaints_text = pick(kDemandComplaints, rng);
      } else if (unit(rng) < 0.25 * (1.0 - d)) {
        s.complaints_text = pick(kObjectionComplaints, rng);
      }
      const bool busy = d > 0.3;
      s.marketer_text = pick(busy ? kMarketerHotspot : kMarketerQuiet, rng);
      s.region_text = pick(busy ? kRegionHotspot : kRegionQuiet, rng);
      sc.sites.push_back(std::move(s));
    }
  }

  // Center the planar frame on the pool's bounding box so that a save/load
  // cycle (which anchors at the bbox centroid) reproduces positions.
  sc.refresh_bbox();
  const Point c = sc.bbox.center();
  for (auto& s : sc.sites) {
    s.position.x -= c.x;
    s.position.y -= c.y;
  }
  sc.refresh_bbox();

  if (profile == ScenarioProfile::kUrbanCluster) {
    const auto norm = normalize_features(sc);
    // Inside a hotspot = within two radii of its center.
    const double inside = std::exp(-2.0);
    std::vector<std::size_t> order(n_candidates);
    for (std::size_t i = 0; i < n_candidates; ++i) order[i] = i;
    auto score = [&](std::size_t i) { return 10.0 * norm.t_hat[i] + 12.0 * norm.u_hat[i]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const bool ia = density[a] >= inside;
      const bool ib = density[b] >= inside;
      if (ia != ib) return ia;
      return score(a) > score(b);
    });
    order.resize(select_count);
    std::sort(order.begin(), order.end());
    sc.planted_optimum = sc.ids_of(order);
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Normalization

double FeatureBounds::scale(double v) const {
  const double span = max - min;
  if (!(span > 0.0)) return 0.0;
  return std::clamp((v - min) / span, 0.0, 1.0);
}

double FeatureBounds::unscale(double v) const { return min + v * (max - min); }

namespace {

template <typename Get>
FeatureBounds bounds_of(const std::vector<CandidateSite>& sites, Get get) {
  FeatureBounds b{get(sites.front()), get(sites.front())};
  for (const auto& s : sites) {
    b.min = std::min(b.min, get(s));
    b.max = std::max(b.max, get(s));
  }
  return b;
}

}  // namespace

NormalizedScenario normalize_features(const Scenario& scenario) {
  if (scenario.sites.empty()) throw PreconditionError("cannot normalize an empty scenario");
  NormalizedScenario out;
  out.scenario = scenario;
  out.throughput_bounds =
      bounds_of(scenario.sites, [](const CandidateSite& s) { return s.throughput_mbps; });
  out.users_bounds = bounds_of(
      scenario.sites, [](const CandidateSite& s) { return static_cast<double>(s.users); });
  out.rent_bounds = bounds_of(scenario.sites, [](const CandidateSite& s) { return s.rent; });
  const std::size_t n = scenario.sites.size();
  out.t_hat.resize(n);
  out.u_hat.resize(n);
  out.e_hat.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = scenario.sites[i];
    out.t_hat[i] = out.throughput_bounds.scale(s.throughput_mbps);
    out.u_hat[i] = out.users_bounds.scale(static_cast<double>(s.users));
    out.e_hat[i] = out.rent_bounds.scale(s.rent);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<std::string> validate_scenario(const Scenario& scenario) {
  std::vector<std::string> issues;
  std::set<std::string> seen;
  std::set<std::string> reported;
  for (const auto& s : scenario.sites) {
    if (s.id.empty()) issues.push_back("site with empty id");
    if (!seen.insert(s.id).second && reported.insert(s.id).second)
      issues.push_back("duplicate site id: " + s.id);
    if (!std::isfinite(s.position.x) || !std::isfinite(s.position.y))
      issues.push_back("non-finite position for site " + s.id);
    if (!(s.throughput_mbps >= 0.0) || !std::isfinite(s.throughput_mbps))
      issues.push_back("negative or non-finite throughput for site " + s.id);
    if (s.users < 0) issues.push_back("negative users for site " + s.id);
    if (!(s.rent >= 0.0) || !std::isfinite(s.rent))
      issues.push_back("negative or non-finite rent for site " + s.id);
  }
  if (scenario.select_count == 0) issues.push_back("select_count must be positive");
  if (scenario.select_count > scenario.sites.size()) issues.push_back("select_count exceeds pool");

  auto check_subset = [&](const std::optional<std::vector<std::string>>& sel,
                          const std::string& name) {
    if (!sel) return;
    std::set<std::string> uniq;
    for (const auto& id : *sel) {
      if (!seen.contains(id)) issues.push_back(name + " references unknown site id: " + id);
      if (!uniq.insert(id).second) issues.push_back(name + " repeats site id: " + id);
    }
    if (sel->size() != scenario.select_count)
      issues.push_back(name + " size " + std::to_string(sel->size()) +
                       " differs from select_count " + std::to_string(scenario.select_count));
  };
  check_subset(scenario.planted_optimum, "planted_optimum");
  check_subset(scenario.actual_built, "actual_built");
  return issues;
}

// ---------------------------------------------------------------------------
// Ingestion

std::string ColumnMapping::source_for(const std::string& canonical) const {
  auto it = columns.find(canonical);
  return it == columns.end() ? canonical : it->second;
}

ColumnMapping ColumnMapping::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw SchemaError("column mapping must be a JSON object");
  ColumnMapping m;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string())
      throw SchemaError("column mapping value for '" + it.key() + "' must be a string",
                        it.key());
    m.columns[it.key()] = it.value().get<std::string>();
  }
  return m;
}

ColumnMapping ColumnMapping::load(const std::string& path) {
  return from_json(nlohmann::json::parse(read_file(path)));
}

const std::vector<std::string>& scenario_columns() {
  static const std::vector<std::string> kColumns = {
      "id",   "lat",          "lon",      "throughput_mbps", "users",
      "rent", "key_area",     "complaints_text", "marketer_text", "region_text",
      "selected"};
  return kColumns;
}

namespace {

const std::vector<std::string> kRequired = {"id", "lat", "lon", "throughput_mbps", "users",
                                            "rent"};

double parse_number(const std::string& raw, const std::string& column, std::size_t row) {
  const std::string s = trim(raw);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw SchemaError("row " + std::to_string(row) + ": column '" + column +
                          "' is not a number: '" + raw + "'",
                      column);
  return v;
}

bool parse_bool(const std::string& raw, const std::string& column, std::size_t row) {
  const std::string s = lower(trim(raw));
  if (s.empty() || s == "false" || s == "0" || s == "no" || s == "n") return false;
  if (s == "true" || s == "1" || s == "yes" || s == "y") return true;
  throw SchemaError("row " + std::to_string(row) + ": column '" + column +
                        "' is not a boolean: '" + raw + "'",
                    column);
}

// One record as canonical-field -> raw string; missing optional fields absent.
using RawRecord = std::map<std::string, std::string>;

Scenario build_scenario(const std::vector<RawRecord>& records, std::size_t select_count) {
  struct GeoRow {
    double lat, lon;
  };
  Scenario sc;
  std::vector<GeoRow> geo;
  std::vector<std::string> selected;
  std::set<std::string> ids;

  std::size_t row = 1;
  for (const auto& rec : records) {
    ++row;
    auto get = [&](const std::string& f) -> std::string {
      auto it = rec.find(f);
      return it == rec.end() ? std::string{} : it->second;
    };
    CandidateSite s;
    s.id = trim(get("id"));
    if (s.id.empty()) throw ValidationError("row " + std::to_string(row) + ": empty id");
    if (!ids.insert(s.id).second) throw ValidationError("duplicate site id: " + s.id);
    geo.push_back({parse_number(get("lat"), "lat", row), parse_number(get("lon"), "lon", row)});
    s.throughput_mbps = parse_number(get("throughput_mbps"), "throughput_mbps", row);
    const double users = parse_number(get("users"), "users", row);
    s.users = static_cast<std::int64_t>(std::llround(users));
    s.rent = parse_number(get("rent"), "rent", row);
    s.key_area = parse_bool(get("key_area"), "key_area", row);
    s.complaints_text = get("complaints_text");
    s.marketer_text = get("marketer_text");
    s.region_text = get("region_text");
    if (parse_bool(get("selected"), "selected", row)) selected.push_back(s.id);
    sc.sites.push_back(std::move(s));
  }
  if (sc.sites.empty()) throw SchemaError("scenario file contains no records");

  // Anchor at the centroid of the lat/lon bounding box.
  double lat_min = geo[0].lat, lat_max = geo[0].lat, lon_min = geo[0].lon, lon_max = geo[0].lon;
  for (const auto& g : geo) {
    lat_min = std::min(lat_min, g.lat);
    lat_max = std::max(lat_max, g.lat);
    lon_min = std::min(lon_min, g.lon);
    lon_max = std::max(lon_max, g.lon);
  }
  sc.anchor = {0.5 * (lat_min + lat_max), 0.5 * (lon_min + lon_max)};
  const LocalProjection proj(sc.anchor);
  for (std::size_t i = 0; i < sc.sites.size(); ++i)
    sc.sites[i].position = proj.to_planar(geo[i].lat, geo[i].lon);
  sc.refresh_bbox();

  if (!selected.empty()) sc.actual_built = selected;
  sc.select_count = select_count ? select_count : selected.size();
  if (sc.select_count == 0)
    throw PreconditionError(
        "select_count unknown: no rows are marked selected and none was given");

  const auto issues = validate_scenario(sc);
  if (!issues.empty()) throw ValidationError(issues.front());
  return sc;
}

}  // namespace

Scenario parse_scenario_csv(const std::string& text, const ColumnMapping& mapping,
                            std::size_t select_count) {
  const auto rows = csv::parse(text);
  if (rows.empty()) throw SchemaError("empty CSV file");
  const auto& header = rows.front();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) position[trim(header[i])] = i;

  std::map<std::string, std::size_t> field_col;
  for (const auto& field : scenario_columns()) {
    auto it = position.find(mapping.source_for(field));
    if (it != position.end()) field_col[field] = it->second;
  }
  for (const auto& req : kRequired) {
    if (!field_col.contains(req))
      throw SchemaError("missing required column '" + mapping.source_for(req) + "'", req);
  }

  std::vector<RawRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw SchemaError("row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                        " fields, header has " + std::to_string(header.size()));
    RawRecord rec;
    for (const auto& [field, col] : field_col) rec[field] = row[col];
    records.push_back(std::move(rec));
  }
  return build_scenario(records, select_count);
}

Scenario parse_scenario_json(const nlohmann::json& records, const ColumnMapping& mapping,
                             std::size_t select_count) {
  if (!records.is_array()) throw SchemaError("scenario JSON must be an array of objects");
  std::vector<RawRecord> raw;
  raw.reserve(records.size());
  for (const auto& obj : records) {
    if (!obj.is_object()) throw SchemaError("scenario JSON records must be objects");
    RawRecord rec;
    for (const auto& field : scenario_columns()) {
      const auto src = mapping.source_for(field);
      if (!obj.contains(src)) continue;
      const auto& v = obj.at(src);
      if (v.is_string()) {
        rec[field] = v.get<std::string>();
      } else if (v.is_boolean()) {
        rec[field] = v.get<bool>() ? "true" : "false";
      } else if (v.is_number_integer()) {
        rec[field] = std::to_string(v.get<std::int64_t>());
      } else if (v.is_number()) {
        rec[field] = csv::format_double(v.get<double>());
      } else if (!v.is_null()) {
        throw SchemaError("unsupported JSON value for field '" + field + "'", field);
      }
    }
    for (const auto& req : kRequired) {
      if (!rec.contains(req))
        throw SchemaError("missing required field '" + mapping.source_for(req) + "'", req);
    }
    raw.push_back(std::move(rec));
  }
  return build_scenario(raw, select_count);
}

Scenario load_scenario(const std::string& path, const ColumnMapping& mapping,
                       std::size_t select_count) {
  const std::string text = read_file(path);
  const auto dot = path.find_last_of('.');
  const std::string ext = dot == std::string::npos ? "" : lower(path.substr(dot));
  if (ext == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError(std::string("invalid JSON: ") + e.what());
    }
    return parse_scenario_json(j, mapping, select_count);
  }
  return parse_scenario_csv(text, mapping, select_count);
}

namespace {

std::vector<std::vector<std::string>> scenario_rows(const Scenario& scenario) {
  const LocalProjection proj(scenario.anchor);
  std::set<std::string> selected;
  if (const auto& ref = scenario.reference_selection()) selected.insert(ref->begin(), ref->end());
  std::vector<std::vector<std::string>> rows;
  rows.reserve(scenario.sites.size());
  for (const auto& s : scenario.sites) {
    const auto geo = proj.to_geo(s.position);
    rows.push_back({s.id, csv::format_double(geo.lat_deg), csv::format_double(geo.lon_deg),
                    csv::format_double(s.throughput_mbps), std::to_string(s.users),
                    csv::format_double(s.rent), s.key_area ? "true" : "false",
                    s.complaints_text, s.marketer_text, s.region_text,
                    selected.contains(s.id) ? "true" : "false"});
  }
  return rows;
}

}  // namespace

std::string scenario_to_csv(const Scenario& scenario) {
  std::string out = csv::format_row(scenario_columns());
  for (const auto& row : scenario_rows(scenario)) out += csv::format_row(row);
  return out;
}

nlohmann::json scenario_to_json(const Scenario& scenario) {
  const LocalProjection proj(scenario.anchor);
  std::set<std::string> selected;
  if (const auto& ref = scenario.reference_selection()) selected.insert(ref->begin(), ref->end());
  auto arr = nlohmann::json::array();
  for (const auto& s : scenario.sites) {
    const auto geo = proj.to_geo(s.position);
    arr.push_back({{"id", s.id},
                   {"lat", geo.lat_deg},
                   {"lon", geo.lon_deg},
                   {"throughput_mbps", s.throughput_mbps},
                   {"users", s.users},
                   {"rent", s.rent},
                   {"key_area", s.key_area},
                   {"complaints_text", s.complaints_text},
                   {"marketer_text", s.marketer_text},
                   {"region_text", s.region_text},
                   {"selected", selected.contains(s.id)}});
  }
  return arr;
}

void save_scenario(const Scenario& scenario, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write file: " + path);
  const auto dot = path.find_last_of('.');
  if (dot != std::string::npos && lower(path.substr(dot)) == ".json") {
    out << scenario_to_json(scenario).dump(2) << '\n';
  } else {
    out << scenario_to_csv(scenario);
  }
}

}  // namespace teleplan
