#include "teleplan/coverage.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "csv.hpp"
#include "parallel.hpp"
#include "teleplan/error.hpp"

namespace teleplan {

namespace {
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}

void to_json(nlohmann::json& j, const RadioConfig& c) {
  j = nlohmann::json{{"tx_power_dbm", c.tx_power_dbm},
                     {"max_gain_dbi", c.max_gain_dbi},
                     {"azimuths_deg", c.azimuths_deg},
                     {"downtilt_deg", c.downtilt_deg},
                     {"antenna_height_m", c.antenna_height_m},
                     {"ue_height_m", c.ue_height_m},
                     {"h_beamwidth_deg", c.h_beamwidth_deg},
                     {"v_beamwidth_deg", c.v_beamwidth_deg},
                     {"max_attenuation_db", c.max_attenuation_db},
                     {"pathloss_ref_db", c.pathloss_ref_db},
                     {"pathloss_ref_distance_m", c.pathloss_ref_distance_m},
                     {"pathloss_exponent", c.pathloss_exponent},
                     {"rsrp_offset_db", c.rsrp_offset_db}};
}

void from_json(const nlohmann::json& j, RadioConfig& c) {
  const RadioConfig d;
  c.tx_power_dbm = j.value("tx_power_dbm", d.tx_power_dbm);
  c.max_gain_dbi = j.value("max_gain_dbi", d.max_gain_dbi);
  c.azimuths_deg = j.value("azimuths_deg", d.azimuths_deg);
  c.downtilt_deg = j.value("downtilt_deg", d.downtilt_deg);
  c.antenna_height_m = j.value("antenna_height_m", d.antenna_height_m);
  c.ue_height_m = j.value("ue_height_m", d.ue_height_m);
  c.h_beamwidth_deg = j.value("h_beamwidth_deg", d.h_beamwidth_deg);
  c.v_beamwidth_deg = j.value("v_beamwidth_deg", d.v_beamwidth_deg);
  c.max_attenuation_db = j.value("max_attenuation_db", d.max_attenuation_db);
  c.pathloss_ref_db = j.value("pathloss_ref_db", d.pathloss_ref_db);
  c.pathloss_ref_distance_m = j.value("pathloss_ref_distance_m", d.pathloss_ref_distance_m);
  c.pathloss_exponent = j.value("pathloss_exponent", d.pathloss_exponent);
  c.rsrp_offset_db = j.value("rsrp_offset_db", d.rsrp_offset_db);
  if (c.azimuths_deg.empty()) throw PreconditionError("radio config needs at least one azimuth");
  if (!(c.pathloss_ref_distance_m > 0.0)) throw PreconditionError("pathloss_ref_distance_m must be > 0");
}

double pathloss(double distance_m, const RadioConfig& config) {
  if (!(distance_m > 0.0)) throw PreconditionError("pathloss distance must be > 0");
  const double d_ref = config.pathloss_ref_distance_m;
  return config.pathloss_ref_db +
         10.0 * config.pathloss_exponent * std::log10(std::max(distance_m, d_ref) / d_ref);
}

double antenna_gain(double phi, double psi, const RadioConfig& config) {
  const double h = phi / config.h_beamwidth_deg;
  const double v = psi / config.v_beamwidth_deg;
  return config.max_gain_dbi - std::min(12.0 * h * h + 12.0 * v * v, config.max_attenuation_db);
}

double link_rsrp(const Point& site, double azimuth_deg, const Point& receiver,
                 const RadioConfig& config) {
  const double dx = receiver.x - site.x;
  const double dy = receiver.y - site.y;
  const double horizontal = std::hypot(dx, dy);
  const double dh = config.antenna_height_m - config.ue_height_m;
  const double d3 = std::hypot(horizontal, dh);
  // Bearing clockwise from north; a receiver under the mast sits on boresight.
  const double bearing = horizontal > 0.0 ? std::atan2(dx, dy) * kRadToDeg : azimuth_deg;
  double phi = std::fmod(bearing - azimuth_deg, 360.0);
  if (phi > 180.0) phi -= 360.0;
  if (phi < -180.0) phi += 360.0;
  const double elevation = std::atan2(dh, horizontal) * kRadToDeg;  // below horizon
  const double psi = elevation - config.downtilt_deg;
  return config.tx_power_dbm + antenna_gain(phi, psi, config) - pathloss(d3, config) +
         config.rsrp_offset_db;
}

GridSpec GridSpec::covering(const BoundingBox& box, double cell_size_m) {
  if (!(cell_size_m > 0.0)) throw PreconditionError("cell size must be > 0");
  GridSpec g;
  g.origin = box.min;
  g.cell_size_m = cell_size_m;
  g.nx = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(box.width() / cell_size_m - 1e-9)));
  g.ny = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(box.height() / cell_size_m - 1e-9)));
  return g;
}

RsrpGrid rsrp_grid(std::span<const Point> sites, const GridSpec& grid, const RadioConfig& config,
                   std::size_t threads) {
  if (sites.empty()) throw PreconditionError("rsrp_grid needs at least one site");
  if (!(grid.cell_size_m > 0.0)) throw PreconditionError("cell size must be > 0");
  if (grid.nx == 0 || grid.ny == 0) throw PreconditionError("grid must have at least one cell");
  if (config.azimuths_deg.empty()) throw PreconditionError("radio config needs at least one azimuth");
  RsrpGrid out{grid, std::vector<double>(grid.nx * grid.ny)};
  detail::parallel_for(grid.ny, threads, [&](std::size_t iy) {
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const Point c = grid.cell_center(ix, iy);
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& s : sites)
        for (double az : config.azimuths_deg) best = std::max(best, link_rsrp(s, az, c, config));
      out.rsrp_dbm[iy * grid.nx + ix] = best;
    }
  });
  return out;
}

CoverageStats coverage_stats(std::span<const double> rsrp) {
  if (rsrp.empty()) throw PreconditionError("coverage_stats needs a non-empty grid");
  CoverageStats s;
  s.cells = rsrp.size();
  std::size_t a80 = 0;
  std::size_t a60 = 0;
  double sum = 0.0;
  s.min_dbm = std::numeric_limits<double>::infinity();
  for (double v : rsrp) {
    if (v > -80.0) ++a80;
    if (v > -60.0) ++a60;
    sum += v;
    s.min_dbm = std::min(s.min_dbm, v);
  }
  const double n = static_cast<double>(rsrp.size());
  s.frac_above_80 = static_cast<double>(a80) / n;
  s.frac_above_60 = static_cast<double>(a60) / n;
  s.mean_dbm = sum / n;
  return s;
}

nlohmann::json coverage_to_json(const CoverageStats& s) {
  return {{"frac_above_-80dbm", s.frac_above_80},
          {"frac_above_-60dbm", s.frac_above_60},
          {"min_dbm", s.min_dbm},
          {"mean_dbm", s.mean_dbm},
          {"cells", s.cells}};
}

std::string grid_to_csv(const RsrpGrid& grid) {
  std::string out = "x,y,rsrp_dbm\n";
  for (std::size_t iy = 0; iy < grid.spec.ny; ++iy)
    for (std::size_t ix = 0; ix < grid.spec.nx; ++ix) {
      const Point c = grid.spec.cell_center(ix, iy);
      out += csv::format_row({csv::format_double(c.x), csv::format_double(c.y),
                              csv::format_double(grid.at(ix, iy))});
    }
  return out;
}

void write_grid_raster(const RsrpGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PreconditionError("cannot write raster: " + path);
  const nlohmann::json header{{"format", "teleplan-rsrp"},
                              {"format_version", 1},
                              {"dtype", "float64-le"},
                              {"order", "row-major, y then x"},
                              {"origin", {grid.spec.origin.x, grid.spec.origin.y}},
                              {"cell_size_m", grid.spec.cell_size_m},
                              {"nx", grid.spec.nx},
                              {"ny", grid.spec.ny}};
  out << header.dump() << '\n';
  for (double v : grid.rsrp_dbm) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(buf, 8);
  }
}

RsrpGrid read_grid_raster(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PreconditionError("cannot open raster: " + path);
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error&) {
    throw SchemaError("raster header is not JSON");
  }
  if (header.value("format", "") != "teleplan-rsrp") throw SchemaError("not a teleplan-rsrp raster");
  RsrpGrid g;
  g.spec.origin = {header.at("origin").at(0).get<double>(), header.at("origin").at(1).get<double>()};
  g.spec.cell_size_m = header.at("cell_size_m").get<double>();
  g.spec.nx = header.at("nx").get<std::size_t>();
  g.spec.ny = header.at("ny").get<std::size_t>();
  g.rsrp_dbm.resize(g.spec.nx * g.spec.ny);
  for (auto& v : g.rsrp_dbm) {
    char buf[8];
    if (!in.read(buf, 8)) throw SchemaError("raster payload truncated");
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[b])) << (8 * b);
    v = std::bit_cast<double>(bits);
  }
  return g;
}

}  // namespace teleplan
