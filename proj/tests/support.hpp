#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <fstream>
#include <sstream>
#include <string>

#include "teleplan/policy.hpp"
#include "teleplan/scenario.hpp"

namespace teleplan::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(TELEPLAN_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline CandidateSite site(std::string id, double x, double y, double t = 0.0, std::int64_t u = 0,
                          double rent = 0.0) {
  CandidateSite s;
  s.id = std::move(id);
  s.position = {x, y};
  s.throughput_mbps = t;
  s.users = u;
  s.rent = rent;
  return s;
}

// Scenario from explicit sites; bbox refreshed.
inline Scenario make_scenario(std::vector<CandidateSite> sites, std::size_t k) {
  Scenario sc;
  sc.sites = std::move(sites);
  sc.select_count = k;
  sc.refresh_bbox();
  return sc;
}

// Central differences on `samples` random coordinates (plus the first and last
// of every layer). Relative error uses a 1e-6 floor on the magnitude so
// coordinates with a vanishing gradient are compared absolutely.
inline double fd_max_rel_error(const std::function<double(const PolicyParams&)>& f,
                               const PolicyParams& at, const PolicyParams& analytic,
                               std::size_t samples, std::uint64_t seed, double h = 1e-5) {
  auto theta = at.flatten();
  const auto g = analytic.flatten();
  std::vector<std::size_t> coords;
  std::size_t offset = 0;
  for (const auto& layer : at.layers) {
    const std::size_t sz = static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    coords.push_back(offset);
    coords.push_back(offset + sz - 1);
    offset += sz;
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, theta.size() - 1);
  for (std::size_t i = 0; i < samples; ++i) coords.push_back(pick(rng));
  PolicyParams probe = at;
  double worst = 0.0;
  for (auto c : coords) {
    const double keep = theta[c];
    theta[c] = keep + h;
    probe.assign_flat(theta);
    const double up = f(probe);
    theta[c] = keep - h;
    probe.assign_flat(theta);
    const double down = f(probe);
    theta[c] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double err = std::abs(fd - g[c]) / std::max({std::abs(fd), std::abs(g[c]), 1e-6});
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace teleplan::testing
