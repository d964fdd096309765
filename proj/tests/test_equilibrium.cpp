#include <hydromarket/cases.hpp>
#include <hydromarket/equilibrium.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"

using namespace hydromarket;

namespace {

SystemModel thermal_takers(double demand = 25.0) {
  SystemModel sys;
  sys.name = "thermal-takers";
  sys.horizon.stages = 3;
  sys.horizon.scenarios = 2;
  sys.horizon.openings = 2;
  sys.horizon.demand = {{demand}, {demand + 5.0}, {demand - 5.0}};
  sys.thermals = {{"a", 10.0, 10.0}, {"b", 20.0, 10.0}, {"c", 35.0, 10.0}, {"d", 60.0, 10.0}};
  sys.agents = {{"A", AgentKind::PriceTaker, {"a", "c"}, {}, {}}, {"B", AgentKind::PriceTaker, {"b", "d"}, {}, {}}};
  sys.finalize();
  sys.validate();
  return sys;
}

ScenarioSet scenarios_of(const SystemModel& sys, std::uint64_t seed = 3) {
  return generate_scenarios(sys.inflow, sys.horizon.stages, sys.horizon.scenarios, sys.horizon.openings, seed);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Clearing, ClearAllMatchesSortAndFill) {
  const auto sys = thermal_takers();
  AgentBids a{3, 1, 1, {}}, b{3, 1, 1, {}};
  for (int t = 0; t < 3; ++t) {
    a.bids.push_back({0, t, 0, 0, {{10.0, 10.0}, {35.0, 10.0}}});
    b.bids.push_back({1, t, 0, 0, {{20.0, 10.0}, {60.0, 10.0}}});
  }
  const auto m = clear_all(sys, {a, b});
  for (int t = 0; t < 3; ++t) {
    std::vector<BidSegment> offers{{10.0, 10.0}, {35.0, 10.0}, {20.0, 10.0}, {60.0, 10.0}};
    const auto ref = oracle::sort_and_fill(offers, sys.horizon.demand[t][0], sys.deficit_cost());
    EXPECT_DOUBLE_EQ(m.spot_at(t, 0, 0), ref.spot);
    EXPECT_NEAR(m.accepted[0][m.tsb(t, 0, 0)] + m.accepted[1][m.tsb(t, 0, 0)], sys.horizon.demand[t][0], 1e-9);
  }
  EXPECT_EQ(m.segments[0][0].size(), 2u);
}

TEST(Norms, SupplyCurveDistance) {
  const Bid x{0, 0, 0, 0, {{10, 5}, {20, 5}}};
  const Bid y{0, 0, 0, 0, {{10, 5}, {30, 5}}};
  EXPECT_DOUBLE_EQ(supply_curve_distance(x, x), 0.0);
  EXPECT_DOUBLE_EQ(supply_curve_distance(x, y), 5.0);  // at price 20 x offers 10, y offers 5
  EXPECT_DOUBLE_EQ(supply_curve_distance(x, Bid{}), 10.0);
}

TEST(Norms, YearlyMeansAndSpotChange) {
  const std::vector<double> m{1, 2, 3, 4, 5};
  EXPECT_EQ(yearly_means(m, 2), (std::vector<double>{1.5, 3.5, 5.0}));
  EXPECT_DOUBLE_EQ(spot_change({1, 2, 3}, {1, 2.5, 2}), 1.0);
}

TEST(Equilibrium, AllTakerThermalReproducesCentralizedSpots) {
  const auto sys = thermal_takers();
  const auto sc = scenarios_of(sys);
  const auto rep = run_equilibrium(sys, sc);
  EXPECT_TRUE(rep.converged);
  EXPECT_EQ(rep.rounds, 1);
  const auto& m = rep.state.market;
  for (int t = 0; t < m.stages; ++t)
    for (int s = 0; s < m.scenarios; ++s) EXPECT_NEAR(m.spot_at(t, s, 0), rep.centralized.spot_at(t, 0, s), 1e-3);
  // Round 0 already holds the initialization spots.
  EXPECT_EQ(rep.trace.front().round, 0);
}

TEST(Equilibrium, InitializationSpotsMatchCentralized) {
  const auto sys = thermal_takers(22.0);
  const auto sc = scenarios_of(sys);
  EquilibriumOptions opt;
  const auto cd = run_centralized(sys, sc);
  const auto st = initialize_market(sys, sc, cd, opt);
  for (int t = 0; t < sys.horizon.stages; ++t)
    for (int s = 0; s < sys.horizon.scenarios; ++s) EXPECT_NEAR(st.market.spot_at(t, s, 0), cd.spot_at(t, 0, s), 1e-4);
}

TEST(Equilibrium, SingleOwnerBidsAtItsCost) {
  SystemModel sys;
  sys.horizon.stages = 2;
  sys.horizon.demand = {{5.0}, {5.0}};
  sys.thermals = {{"g", 30.0, 10.0}};
  sys.finalize();
  sys.validate();
  const auto sc = scenarios_of(sys);
  const auto cd = run_centralized(sys, sc);
  const auto st = initialize_market(sys, sc, cd, {});
  const auto& bid = st.bids[0].at(0, 0, 0);
  ASSERT_EQ(bid.segments.size(), 1u);
  EXPECT_DOUBLE_EQ(bid.segments[0].price, 30.0);
  EXPECT_DOUBLE_EQ(bid.segments[0].quantity, 10.0);
}

TEST(Equilibrium, ZeroDemandGivesZeroSpots) {
  const auto sys = thermal_takers(5.0);
  SystemModel z = sys;
  for (auto& d : z.horizon.demand) d = {0.0};
  const auto sc = scenarios_of(z);
  const auto rep = run_equilibrium(z, sc);
  EXPECT_TRUE(rep.converged);
  for (double p : rep.state.market.spot) EXPECT_EQ(p, 0.0);
  for (const auto& acc : rep.state.market.accepted)
    for (double q : acc) EXPECT_EQ(q, 0.0);
}

TEST(Equilibrium, NullPlayerLeavesMarketUnchanged) {
  auto sys = thermal_takers();
  sys.agents.push_back({"ghost", AgentKind::PriceMaker, {}, {}, {}});
  sys.validate();
  const auto sc = scenarios_of(sys);
  const auto cd = run_centralized(sys, sc);
  EquilibriumOptions opt;
  auto st = initialize_market(sys, sc, cd, opt);
  const auto bids = best_response(sys, sc, st, 2, opt);
  EXPECT_DOUBLE_EQ(bid_change(st.bids[2], bids), 0.0);
  for (const auto& b : bids.bids) EXPECT_TRUE(b.segments.empty());
}

TEST(Equilibrium, LonePriceMakerMovesToDeficitBox) {
  // A monopolist reservoir with exactly enough water for the horizon: facing
  // inelastic demand, its stored water is worth the deficit cost to it.
  SystemModel sys;
  sys.horizon.stages = 2;
  sys.horizon.demand = {{5.0}, {5.0}};
  HydroPlant h;
  h.id = "h";
  h.max_turbine = h.max_generation = 10.0;
  h.max_storage = h.initial_storage = 10.0;
  sys.hydros = {h};
  sys.agents = {{"M", AgentKind::PriceMaker, {}, {"h"}, {}}};
  sys.finalize();
  sys.validate();
  const auto sc = scenarios_of(sys);
  EquilibriumOptions opt;
  opt.max_rounds = 3;
  const auto rep = run_equilibrium(sys, sc, opt);
  const auto& bid = rep.state.bids[0].at(0, 0, 0);
  ASSERT_FALSE(bid.segments.empty());
  EXPECT_DOUBLE_EQ(bid.segments.back().price, sys.deficit_cost());
  EXPECT_DOUBLE_EQ(rep.state.market.spot_at(0, 0, 0), sys.deficit_cost());
}

TEST(Equilibrium, BestResponseWeaklyRaisesRevenue) {
  // Two identical thermal owners and tight demand.
  SystemModel sys;
  sys.horizon.stages = 2;
  sys.horizon.scenarios = 1;
  sys.horizon.demand = {{18.0}, {18.0}};
  sys.thermals = {{"a", 20.0, 10.0}, {"b", 20.0, 10.0}, {"f", 80.0, 10.0}};
  sys.agents = {{"A", AgentKind::PriceMaker, {"a"}, {}, {}},
                {"B", AgentKind::PriceMaker, {"b"}, {}, {}},
                {"F", AgentKind::PriceTaker, {"f"}, {}, {}}};
  sys.finalize();
  sys.validate();
  const auto sc = scenarios_of(sys);
  const auto cd = run_centralized(sys, sc);
  EquilibriumOptions opt;
  auto st = initialize_market(sys, sc, cd, opt);
  const auto before = totals(ne_stage_revenue(sys, st.market))[0];
  st.bids[0] = best_response(sys, sc, st, 0, opt);
  st.market = clear_all(sys, st.bids);
  const auto after = totals(ne_stage_revenue(sys, st.market))[0];
  EXPECT_GE(after, before - 1e-9);
}

TEST(Equilibrium, DuopolyMarketPower) {
  const auto sys = cases::duopoly();
  const auto sc = scenarios_of(sys, 7);
  const auto rep = run_equilibrium(sys, sc);
  ASSERT_TRUE(rep.converged);
  const auto ne = stage_mean_spot(rep.state.market, sys.horizon.block_weights);
  for (int t = 0; t < sys.horizon.stages; ++t) {
    double cd = 0.0;
    for (int s = 0; s < sc.scenarios; ++s) cd += rep.centralized.spot_at(t, 0, s) / sc.scenarios;
    EXPECT_GE(ne[t], cd - 1e-9) << "stage " << t;
  }
  for (std::size_t a = 0; a < sys.agents.size(); ++a)
    if (sys.agents[a].kind == AgentKind::PriceMaker) EXPECT_GE(rep.ne_revenue[a], rep.cd_revenue[a]);
  // Converged round: every update within tolerance.
  for (const auto& r : rep.trace)
    if (r.round == rep.rounds) {
      EXPECT_LE(r.bid_change, rep.tol_bid);
      EXPECT_LE(r.spot_change, rep.tol_spot);
    }
}

TEST(Equilibrium, ExtraRoundAtFixedPointChangesNothing) {
  const auto sys = cases::duopoly();
  const auto sc = scenarios_of(sys, 7);
  auto rep = run_equilibrium(sys, sc);
  ASSERT_TRUE(rep.converged);
  EquilibriumOptions opt;
  auto st = rep.state;
  for (int a = 0; a < static_cast<int>(sys.agents.size()); ++a) {
    auto b = best_response(sys, sc, st, a, opt);
    EXPECT_LE(bid_change(st.bids[a], b), rep.tol_bid);
    st.bids[a] = std::move(b);
    st.market = clear_all(sys, st.bids);
  }
}

TEST(Equilibrium, AgentOrderIsValidated) {
  const auto sys = thermal_takers();
  const auto sc = scenarios_of(sys);
  EquilibriumOptions opt;
  opt.order = {1, 5};
  EXPECT_THROW(run_equilibrium(sys, sc, opt), std::invalid_argument);
  opt.order = {1, 0};
  EXPECT_TRUE(run_equilibrium(sys, sc, opt).converged);
}

TEST(Equilibrium, CsvOutputsAreDeterministic) {
  const auto sys = cases::duopoly();
  const auto sc = scenarios_of(sys, 7);
  namespace fs = std::filesystem;
  const auto root = fs::temp_directory_path() / "hm_eq_csv";
  std::vector<std::string> names{"convergence.csv", "spot_cd_vs_ne.csv", "revenue_by_agent.csv", "bids.csv"};
  std::vector<std::string> first;
  for (int run = 0; run < 2; ++run) {
    const auto dir = root / std::to_string(run);
    fs::create_directories(dir);
    EquilibriumOptions opt;
    opt.workers = run + 1;
    opt.optbid.max_spot_scenarios = 0;
    const auto rep = run_equilibrium(sys, sc, opt);
    write_equilibrium_csv(rep, sys, dir.string());
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto text = slurp((dir / names[k]).string());
      if (run == 0) first.push_back(text);
      else EXPECT_EQ(text, first[k]) << names[k];
    }
  }
  std::istringstream conv(first[0]);
  std::string header;
  std::getline(conv, header);
  EXPECT_EQ(header, "point,round,agent,year,mean_spot,shifted_mean_spot,bid_change,spot_change,failed");
  fs::remove_all(root);
}

TEST(Equilibrium, ConvergenceCsvShiftsByOneRound) {
  const auto sys = cases::duopoly();
  const auto sc = scenarios_of(sys, 7);
  EquilibriumOptions opt;
  opt.stages_per_year = 3;  // two "years" of three stages
  const auto rep = run_equilibrium(sys, sc, opt);
  const auto path = (std::filesystem::temp_directory_path() / "hm_conv.csv").string();
  write_convergence_csv(rep, sys, path);
  std::istringstream in(slurp(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.push_back("");
    rows.push_back(f);
  }
  const std::size_t shift = sys.agents.size() * 2;
  ASSERT_GT(rows.size(), shift);
  for (std::size_t p = 0; p < rows.size(); ++p) {
    if (p < shift) EXPECT_EQ(rows[p][5], "");
    else EXPECT_EQ(std::stod(rows[p][5]), std::stod(rows[p - shift][4]));
  }
  std::filesystem::remove(path);
}
