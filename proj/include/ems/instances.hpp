#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ems/citymodel.hpp"
#include "ems/ctmc.hpp"
#include "ems/metrics.hpp"
#include "ems/simulator.hpp"

namespace ems {

inline constexpr int kMaxBases = 34;

/// A city plus the service parameters it is simulated with.
struct Setup {
  std::string name;
  CityInstance city;  // not finalized until restricted to its bases
  ServiceParams service;
};

/// Built-in setups: "rj" (Rio-like synthetic city, 34 stations, 10 x 10
/// zones), "us" (same city, longer US-style service times) and "synthetic"
/// (small 5 x 5 test city with 6 stations). Throws ConfigError otherwise.
Setup make_setup(const std::string& name, std::uint64_t seed = 2024);

const std::vector<std::string>& setup_names();

/// Keeps the first `nb_bases` stations and finalizes the city.
void restrict_bases(CityInstance& city, int nb_bases);

/// Per-station Markov models. A station serves the zones mapped to it;
/// lambda(c) sums their weekly-mean rates, 1/mu(a, c) is twice the
/// demand-weighted travel time to those zones plus the mean time spent on
/// scene, at hospital and cleaning, and phi(c) = theta_c * phi_wait.
std::vector<StationModel> derive_station_models(const CityInstance& city, const ServiceParams& service,
                                                const CostModel& cost, double phi_wait = 1800.0);

/// JSON instance file: zones, stations, hospitals, travel model, rates and
/// optional service parameters. Relative CSV paths resolve against the
/// file's directory.
Setup load_setup_json(const std::filesystem::path& path);
void save_setup_json(const Setup& setup, const std::filesystem::path& path);

}  // namespace ems
