#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "teleplan/scenario.hpp"

namespace teleplan {

// Three-sector macro site radio model. Angles in degrees, powers in dBm/dB.
struct RadioConfig {
  double tx_power_dbm = 46.99;  // 50 W
  double max_gain_dbi = 15.0;
  std::vector<double> azimuths_deg = {0.0, 120.0, 240.0};  // clockwise from north (+y)
  double downtilt_deg = 10.0;
  double antenna_height_m = 30.0;
  double ue_height_m = 1.5;
  double h_beamwidth_deg = 65.0;
  double v_beamwidth_deg = 10.0;
  double max_attenuation_db = 30.0;
  double pathloss_ref_db = 60.0;
  double pathloss_ref_distance_m = 10.0;
  double pathloss_exponent = 3.5;
  double rsrp_offset_db = 0.0;  // calibration knob added to every cell
};

void to_json(nlohmann::json& j, const RadioConfig& c);
void from_json(const nlohmann::json& j, RadioConfig& c);

// PL_ref + 10 n log10(max(d, d_ref) / d_ref). Throws PreconditionError for d <= 0.
double pathloss(double distance_m, const RadioConfig& config = {});

// max_gain - min(12 (phi / phi_3dB)^2 + 12 (psi / psi_3dB)^2, A_max)
double antenna_gain(double horizontal_offset_deg, double vertical_offset_deg,
                    const RadioConfig& config = {});

// Received power at `receiver` (ground level plus ue height) from one sector.
double link_rsrp(const Point& site, double azimuth_deg, const Point& receiver,
                 const RadioConfig& config = {});

// Cell (ix, iy) is centred at origin + ((ix + 0.5) * cell, (iy + 0.5) * cell).
struct GridSpec {
  Point origin;
  double cell_size_m = 20.0;
  std::size_t nx = 0;
  std::size_t ny = 0;

  Point cell_center(std::size_t ix, std::size_t iy) const {
    return {origin.x + (static_cast<double>(ix) + 0.5) * cell_size_m,
            origin.y + (static_cast<double>(iy) + 0.5) * cell_size_m};
  }
  // Grid covering `box` with whole cells.
  static GridSpec covering(const BoundingBox& box, double cell_size_m);
};

struct RsrpGrid {
  GridSpec spec;
  std::vector<double> rsrp_dbm;  // row-major, iy * nx + ix

  double at(std::size_t ix, std::size_t iy) const { return rsrp_dbm[iy * spec.nx + ix]; }
};

// Best-server RSRP per cell over every (site, sector) pair.
RsrpGrid rsrp_grid(std::span<const Point> sites, const GridSpec& grid,
                   const RadioConfig& config = {}, std::size_t threads = 1);

struct CoverageStats {
  double frac_above_80 = 0.0;  // share of cells with RSRP > -80 dBm
  double frac_above_60 = 0.0;  // share of cells with RSRP > -60 dBm
  double min_dbm = 0.0;
  double mean_dbm = 0.0;
  std::size_t cells = 0;
};

CoverageStats coverage_stats(std::span<const double> rsrp_dbm);
inline CoverageStats coverage_stats(const RsrpGrid& grid) { return coverage_stats(grid.rsrp_dbm); }

nlohmann::json coverage_to_json(const CoverageStats& stats);

// CSV with header x,y,rsrp_dbm, one row per cell centre.
std::string grid_to_csv(const RsrpGrid& grid);
// Raster: one JSON header line {"format":"teleplan-rsrp",...,"nx","ny"} terminated
// by '\n', followed by nx * ny little-endian float64 values in row-major order.
void write_grid_raster(const RsrpGrid& grid, const std::string& path);
RsrpGrid read_grid_raster(const std::string& path);

}  // namespace teleplan
