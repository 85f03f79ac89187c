#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "teleplan/coverage.hpp"
#include "teleplan/error.hpp"

using namespace teleplan;
using teleplan::testing::scratch_dir;

namespace {

// Independent recomputation written from the radio model definition.
double oracle_rsrp(const std::vector<Point>& sites, const Point& cell, const RadioConfig& c) {
  const double pi = std::acos(-1.0);
  double best = -1e300;
  for (const auto& s : sites) {
    const double dx = cell.x - s.x, dy = cell.y - s.y;
    const double dh = c.antenna_height_m - c.ue_height_m;
    const double horiz = std::sqrt(dx * dx + dy * dy);
    const double d3 = std::sqrt(horiz * horiz + dh * dh);
    const double pl = c.pathloss_ref_db + 10.0 * c.pathloss_exponent *
                                              std::log10(std::max(d3, c.pathloss_ref_distance_m) /
                                                         c.pathloss_ref_distance_m);
    double bearing = std::atan2(dx, dy) * 180.0 / pi;
    const double tilt = std::atan2(dh, horiz) * 180.0 / pi - c.downtilt_deg;
    for (double az : c.azimuths_deg) {
      double phi = horiz > 0 ? bearing - az : 0.0;
      while (phi > 180.0) phi -= 360.0;
      while (phi < -180.0) phi += 360.0;
      const double att = std::min(12.0 * std::pow(phi / c.h_beamwidth_deg, 2) +
                                      12.0 * std::pow(tilt / c.v_beamwidth_deg, 2),
                                  c.max_attenuation_db);
      best = std::max(best, c.tx_power_dbm + c.max_gain_dbi - att - pl + c.rsrp_offset_db);
    }
  }
  return best;
}

std::vector<Point> lattice(int nx, int ny, double spacing, Point origin) {
  std::vector<Point> out;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) out.push_back({origin.x + i * spacing, origin.y + j * spacing});
  return out;
}

}  // namespace

TEST(Coverage, Defaults) {
  const RadioConfig c;
  EXPECT_NEAR(c.tx_power_dbm, 10.0 * std::log10(50.0 * 1000.0), 0.01);
  EXPECT_EQ(c.azimuths_deg, (std::vector<double>{0, 120, 240}));
  EXPECT_EQ(c.downtilt_deg, 10.0);
  nlohmann::json j = c;
  EXPECT_EQ(nlohmann::json(j.get<RadioConfig>()), j);
}

TEST(Coverage, Pathloss) {
  EXPECT_DOUBLE_EQ(pathloss(10.0), 60.0);
  EXPECT_DOUBLE_EQ(pathloss(100.0), 95.0);
  EXPECT_DOUBLE_EQ(pathloss(2.0), 60.0);
  EXPECT_THROW(pathloss(0.0), PreconditionError);
  EXPECT_THROW(pathloss(-1.0), PreconditionError);
  double prev = 0;
  for (double d = 1.0; d < 5000.0; d *= 1.1) {
    EXPECT_GE(pathloss(d), prev);
    prev = pathloss(d);
  }
}

TEST(Coverage, AntennaGain) {
  EXPECT_DOUBLE_EQ(antenna_gain(0, 0), 15.0);
  EXPECT_DOUBLE_EQ(antenna_gain(65, 0), 3.0);
  EXPECT_DOUBLE_EQ(antenna_gain(180, 0), -15.0);
  EXPECT_DOUBLE_EQ(antenna_gain(0, 10), 3.0);
}

TEST(Coverage, SingleLinkClosedForm) {
  const RadioConfig c;
  // 10 m north of the mast, on the azimuth-0 boresight.
  const double dh = 28.5;
  const double d3 = std::hypot(10.0, dh);
  const double elev = std::atan(dh / 10.0) * 180.0 / std::acos(-1.0);
  const double gain = 15.0 - std::min(12.0 * std::pow((elev - 10.0) / 10.0, 2), 30.0);
  const double expected = 46.99 + gain - (60.0 + 35.0 * std::log10(d3 / 10.0));
  EXPECT_NEAR(link_rsrp({0, 0}, 0.0, {0, 10}, c), expected, 0.01);
  // Receiver directly under the mast.
  EXPECT_TRUE(std::isfinite(link_rsrp({0, 0}, 0.0, {0, 0}, c)));
}

TEST(Coverage, BoresightRayMonotone) {
  const RadioConfig c;
  const std::vector<Point> one{{0, 0}};
  double prev = 1e9;
  // Beyond the main-lobe elevation the received power only falls.
  for (double d = 200.0; d < 5000.0; d += 20.0) {
    const double v = link_rsrp({0, 0}, 0.0, {0, d}, c);
    EXPECT_LE(v, prev + 1e-12) << d;
    prev = v;
  }
}

TEST(Coverage, GridMatchesOracle) {
  const RadioConfig c;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1000);
  std::vector<Point> sites;
  for (int i = 0; i < 5; ++i) sites.push_back({u(rng), u(rng)});
  GridSpec g{{-100, -100}, 25.0, 48, 44};
  const auto grid = rsrp_grid(sites, g, c, 2);
  ASSERT_EQ(grid.rsrp_dbm.size(), 48u * 44u);
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const Point cell{-100 + (ix + 0.5) * 25.0, -100 + (iy + 0.5) * 25.0};
      EXPECT_NEAR(grid.at(ix, iy), oracle_rsrp(sites, cell, c), 1e-9);
    }
}

TEST(Coverage, EmptySitesRejected) {
  EXPECT_THROW(rsrp_grid({}, GridSpec{{0, 0}, 20, 2, 2}), PreconditionError);
  const std::vector<Point> s{{0, 0}};
  EXPECT_THROW(rsrp_grid(s, GridSpec{{0, 0}, 0.0, 2, 2}), PreconditionError);
}

TEST(Coverage, MaxServerMonotone) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1500);
  std::vector<Point> sites;
  GridSpec g{{0, 0}, 50.0, 30, 30};
  auto prev = rsrp_grid(std::vector<Point>{{u(rng), u(rng)}}, g);
  sites.push_back({750, 750});
  for (int i = 0; i < 6; ++i) {
    sites.push_back({u(rng), u(rng)});
    auto next = rsrp_grid(sites, g);
    if (i > 0)
      for (std::size_t c = 0; c < next.rsrp_dbm.size(); ++c)
        EXPECT_GE(next.rsrp_dbm[c], prev.rsrp_dbm[c]);
    prev = std::move(next);
  }
}

TEST(Coverage, PermutationInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1000);
  std::vector<Point> sites;
  for (int i = 0; i < 7; ++i) sites.push_back({u(rng), u(rng)});
  GridSpec g{{0, 0}, 40.0, 25, 25};
  const auto a = rsrp_grid(sites, g);
  std::shuffle(sites.begin(), sites.end(), rng);
  EXPECT_EQ(rsrp_grid(sites, g, {}, 3).rsrp_dbm, a.rsrp_dbm);
}

TEST(Coverage, RadialSymmetryWithoutPattern) {
  RadioConfig c;
  c.max_attenuation_db = 0.0;
  c.azimuths_deg = {0.0};
  const std::vector<Point> s{{0, 0}};
  GridSpec g{{-500, -500}, 20.0, 50, 50};
  const auto grid = rsrp_grid(s, g, c);
  for (std::size_t iy = 0; iy < g.ny; ++iy)
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      const auto p = g.cell_center(ix, iy);
      const double r = std::hypot(p.x, p.y);
      // Field is a function of distance alone.
      const double expected = link_rsrp({0, 0}, 0.0, {r, 0}, c);
      EXPECT_NEAR(grid.at(ix, iy), expected, 1e-9);
    }
}

TEST(Coverage, StatsExamples) {
  const std::vector<double> cells{-50, -70, -90};
  const auto s = coverage_stats(cells);
  EXPECT_DOUBLE_EQ(s.frac_above_80, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.frac_above_60, 1.0 / 3.0);
  EXPECT_EQ(s.min_dbm, -90.0);
  EXPECT_DOUBLE_EQ(s.mean_dbm, -70.0);
  const std::vector<double> flat(10, -59.0);
  EXPECT_EQ(coverage_stats(flat).frac_above_80, 1.0);
  EXPECT_EQ(coverage_stats(flat).frac_above_60, 1.0);
  EXPECT_THROW(coverage_stats(std::vector<double>{}), PreconditionError);
}

TEST(Coverage, StatsStreamingOracle) {
  std::vector<Point> sites = lattice(3, 3, 1500, {500, 500});
  GridSpec g{{0, 0}, 20.0, 200, 200};
  const auto grid = rsrp_grid(sites, g, {}, 2);
  std::size_t a80 = 0, a60 = 0;
  double mn = 1e300, mean = 0;
  std::size_t n = 0;
  for (double v : grid.rsrp_dbm) {
    ++n;
    a80 += v > -80;
    a60 += v > -60;
    mn = std::min(mn, v);
    mean += (v - mean) / static_cast<double>(n);
  }
  const auto s = coverage_stats(grid);
  EXPECT_EQ(s.cells, 40000u);
  EXPECT_DOUBLE_EQ(s.frac_above_80, a80 / 40000.0);
  EXPECT_DOUBLE_EQ(s.frac_above_60, a60 / 40000.0);
  EXPECT_EQ(s.min_dbm, mn);
  EXPECT_NEAR(s.mean_dbm, mean, 1e-9);
}

TEST(Coverage, CoveringGrid) {
  BoundingBox b{{-100, 0}, {900, 410}};
  const auto g = GridSpec::covering(b, 50.0);
  EXPECT_EQ(g.nx, 20u);
  EXPECT_EQ(g.ny, 9u);
  EXPECT_EQ(g.origin.x, -100.0);
}

TEST(Coverage, RasterAndCsvRoundTrip) {
  const auto dir = scratch_dir("coverage_raster");
  const std::vector<Point> s{{100, 100}, {400, 250}};
  GridSpec g{{0, 0}, 30.0, 17, 11};
  const auto grid = rsrp_grid(s, g);
  const auto path = (dir / "g.bin").string();
  write_grid_raster(grid, path);
  const auto back = read_grid_raster(path);
  EXPECT_EQ(back.spec.nx, 17u);
  EXPECT_EQ(back.spec.ny, 11u);
  EXPECT_EQ(back.rsrp_dbm, grid.rsrp_dbm);
  const auto csv = grid_to_csv(grid);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 17 * 11);
}
