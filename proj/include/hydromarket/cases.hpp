#pragma once

// Built-in case generators used by the CLI's gen-case pipeline and the tests.

#include <hydromarket/rng.hpp>
#include <hydromarket/system_model.hpp>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket::cases {

/// Two stages, demand 20 MW, thermals 10 MW @ 50 and 15 MW @ 200, one hydro
/// holding 20 MWh of water and no inflow.
inline SystemModel toy() {
  SystemModel sys;
  sys.name = "toy";
  sys.horizon.stages = 2;
  sys.horizon.stage_hours = 1.0;
  sys.horizon.demand = {{20.0}, {20.0}};
  sys.thermals = {{"g1", 50.0, 10.0}, {"g2", 200.0, 15.0}};
  HydroPlant h;
  h.id = "h1";
  h.production_factor = 1.0;
  h.max_turbine = 20.0;
  h.max_storage = 20.0;
  h.max_generation = 20.0;
  h.initial_storage = 20.0;
  sys.hydros = {h};
  sys.finalize();
  sys.validate();
  return sys;
}

namespace detail {

inline HydroPlant hydro(const std::string& id, double mw, double pf, double storage, double initial,
                        std::optional<std::string> downstream = std::nullopt, double stage_hours = 1.0) {
  HydroPlant h;
  h.id = id;
  h.production_factor = pf;
  h.max_generation = mw;
  h.max_turbine = mw * stage_hours / pf;
  h.max_storage = storage;
  h.initial_storage = initial;
  h.downstream = std::move(downstream);
  return h;
}

inline HydroInflow ar1(const std::vector<double>& seasonal_mean, double phi, double rel_std, const std::string& group) {
  HydroInflow f;
  const std::size_t n = seasonal_mean.size();
  for (std::size_t m = 0; m < n; ++m) {
    const double prev = seasonal_mean[(m + n - 1) % n];
    f.ar.push_back({phi});
    f.residual.push_back({ResidualKind::LogNormal, seasonal_mean[m] - phi * prev, rel_std * seasonal_mean[m], {}});
  }
  f.history = {seasonal_mean.back()};
  f.group = group;
  return f;
}

// Splits total into n positive parts drawn from rng, rounded to 0.1.
inline std::vector<double> split(double total, int n, Rng& rng) {
  std::vector<double> w(n);
  double sum = 0.0;
  for (auto& x : w) sum += (x = 0.5 + rng.uniform());
  std::vector<double> out(n);
  double used = 0.0;
  for (int i = 0; i + 1 < n; ++i) used += (out[i] = std::round(10.0 * total * w[i] / sum) / 10.0);
  out[n - 1] = std::round(10.0 * (total - used)) / 10.0;
  return out;
}

}  // namespace detail

/// Two identical price makers (a reservoir and a 15 MW thermal each) and a
/// price-taking thermal ladder, six stages.
inline SystemModel duopoly() {
  SystemModel sys;
  sys.name = "duopoly";
  sys.horizon.stages = 6;
  sys.horizon.stage_hours = 1.0;
  sys.horizon.scenarios = 4;
  sys.horizon.openings = 3;
  sys.horizon.demand = {{100.0}, {100.0}, {105.0}, {110.0}, {105.0}, {100.0}};
  sys.thermals = {{"tA", 40.0, 15.0}, {"tB", 40.0, 15.0}, {"k1", 30.0, 25.0}, {"k2", 55.0, 25.0},
                  {"k3", 75.0, 25.0}, {"k4", 100.0, 25.0}, {"k5", 140.0, 30.0}};
  sys.hydros = {detail::hydro("hA", 35.0, 1.0, 60.0, 30.0), detail::hydro("hB", 35.0, 1.0, 60.0, 30.0)};
  sys.inflow.hydros = {detail::ar1({20.0}, 0.3, 0.15, "A"), detail::ar1({20.0}, 0.3, 0.15, "B")};
  sys.agents = {{"A", AgentKind::PriceMaker, {"tA"}, {"hA"}, {}},
                {"B", AgentKind::PriceMaker, {"tB"}, {"hB"}, {}},
                {"fringe", AgentKind::PriceTaker, {"k1", "k2", "k3", "k4", "k5"}, {}, {}}};
  sys.finalize();
  sys.validate();
  return sys;
}

/// Synthetic system with the published aggregates of the Panama case: 22
/// thermals (~1145 MW), 42 hydros (~1674 MW, three reservoirs), monthly
/// stages with demand rising 850 -> 1050 MW over four years, AR(1) inflows,
/// three price makers (~681/539/499 MW, the first owning a nine-plant
/// cascade) and a price-taking remainder (~1100 MW). Plant-level data are
/// drawn from the seed.
inline SystemModel panama_like(std::uint64_t seed = 1, int stages = 48, int scenarios = 20, int openings = 10) {
  if (stages < 1 || scenarios < 1 || openings < 1) throw std::invalid_argument("panama_like: counts must be >= 1");
  constexpr double kHours = 730.0;
  // Dry season January-April, wet season May-December.
  static constexpr std::array<double, 12> kSeason{0.5, 0.35, 0.3, 0.4, 0.9, 1.1, 1.1, 1.2, 1.3, 1.5, 1.6, 1.0};
  double season_sum = 0.0;
  for (double f : kSeason) season_sum += f;

  SystemModel sys;
  sys.name = "panama-like";
  sys.horizon.stages = stages;
  sys.horizon.stage_hours = kHours;
  sys.horizon.scenarios = scenarios;
  sys.horizon.openings = openings;
  for (int t = 0; t < stages; ++t) sys.horizon.demand.push_back({850.0 + 200.0 * t / 47.0});

  Rng rng(seed, 0x50414e41ull);  // "PANA"
  struct Owner {
    std::string id;
    AgentKind kind;
    double thermal_mw;
    int thermal_units;
    double reservoir_mw;  // 0 = none
    double river_mw;
    int river_units;
    bool cascade;
  };
  const std::vector<Owner> owners{{"maker1", AgentKind::PriceMaker, 150.0, 2, 300.0, 231.0, 8, true},
                                  {"maker2", AgentKind::PriceMaker, 150.0, 2, 250.0, 139.0, 6, false},
                                  {"maker3", AgentKind::PriceMaker, 180.0, 3, 200.0, 119.0, 5, false},
                                  {"taker", AgentKind::PriceTaker, 665.0, 15, 0.0, 435.0, 20, false}};
  auto seasonal = [&](double mean_energy) {
    std::vector<double> m;
    for (double f : kSeason) m.push_back(mean_energy * f * 12.0 / season_sum);
    return m;
  };
  int n_thermal = 0, n_hydro = 0;
  for (const auto& o : owners) {
    Agent a{o.id, o.kind, {}, {}, {}};
    for (double mw : detail::split(o.thermal_mw, o.thermal_units, rng)) {
      const std::string id = "T" + std::to_string(++n_thermal);
      sys.thermals.push_back({id, std::round(60.0 + 190.0 * rng.uniform()), mw});
      a.thermal_ids.push_back(id);
    }
    if (o.reservoir_mw > 0.0) {
      const std::string id = "R" + std::to_string(++n_hydro);
      const double storage = 4.0 * o.reservoir_mw * kHours;
      sys.hydros.push_back(detail::hydro(id, o.reservoir_mw, 1.0, storage, 0.6 * storage, std::nullopt, kHours));
      sys.inflow.hydros.push_back(detail::ar1(seasonal(0.4 * o.reservoir_mw * kHours), 0.4, 0.3, o.id));
      a.hydro_ids.push_back(id);
    }
    for (double mw : detail::split(o.river_mw, o.river_units, rng)) {
      const std::string id = "H" + std::to_string(++n_hydro);
      const double pf = 0.5 + 0.5 * rng.uniform();
      sys.hydros.push_back(detail::hydro(id, mw, pf, 0.0, 0.0, std::nullopt, kHours));
      // Cascade plants reuse the water released upstream and get little of their own.
      const double cf = o.cascade ? 0.05 : 0.33;
      sys.inflow.hydros.push_back(detail::ar1(seasonal(cf * mw * kHours / pf), 0.4, 0.3, o.id));
      a.hydro_ids.push_back(id);
      if (o.cascade) sys.hydros[sys.hydros.size() - 2].downstream = id;
    }
    sys.agents.push_back(a);
  }
  sys.finalize();
  sys.validate();
  return sys;
}

inline SystemModel by_profile(const std::string& profile, std::uint64_t seed = 1) {
  if (profile == "toy") return toy();
  if (profile == "duopoly") return duopoly();
  if (profile == "panama-like") return panama_like(seed);
  throw std::invalid_argument("unknown profile '" + profile + "' (expected toy, duopoly or panama-like)");
}

}  // namespace hydromarket::cases
