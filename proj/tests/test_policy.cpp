#include <hydromarket/cases.hpp>
#include <hydromarket/policy.hpp>

#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace hydromarket;

namespace {

struct Case {
  SystemModel sys;
  ScenarioSet sc;
  SpotScenarios spots;  // [t][s][b]
  MarkovChain chain;
  Case(SystemModel m, SpotScenarios p, int K = 1) : sys(std::move(m)), spots(std::move(p)) {
    sc = generate_scenarios(sys.inflow, sys.horizon.stages, sys.horizon.scenarios, sys.horizon.openings, 0);
    chain = build_markov_chain(spots, sys.horizon.block_weights, K, sys.horizon.openings, 0);
  }
  SddpContext ctx() const { return {sys.inflow, sc}; }
};

SystemModel one_thermal(double cost, double cap, int stages = 1, int scenarios = 1) {
  SystemModel sys;
  sys.horizon.stages = stages;
  sys.horizon.scenarios = scenarios;
  for (int t = 0; t < stages; ++t) sys.horizon.demand.push_back({100});
  sys.thermals = {{"g", cost, cap}};
  sys.finalize();
  sys.validate();
  return sys;
}

SpotScenarios flat(int T, int S, double p) { return SpotScenarios(T, std::vector<PriceVector>(S, PriceVector{p})); }

RevenueCurves single_curve(int T, RevenueCurve c) {
  return RevenueCurves(T, std::vector<std::vector<RevenueCurve>>(1, std::vector<RevenueCurve>{c}));
}

double delta_of(const LpSolution& sol, const LinearProgram& lp) { return sol.primal[*lp.find_variable("delta[0]")]; }

}  // namespace

TEST(MaxRev, ThermalSellsWhenMarginIsPositive) {
  Case s(one_thermal(15, 10), flat(1, 1, 20));
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  const auto lp = pol.build(0, 0, {{}, {}}).lp;
  const auto sol = solve(lp);
  EXPECT_NEAR(delta_of(sol, lp), 10, 1e-9);
  EXPECT_NEAR(sol.objective, 50, 1e-9);
}

TEST(MaxRev, ThermalShutsDownOnNegativeMargin) {
  Case s(one_thermal(15, 10), flat(1, 1, 10));
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  const auto lp = pol.build(0, 0, {{}, {}}).lp;
  const auto sol = solve(lp);
  EXPECT_NEAR(delta_of(sol, lp), 0, 1e-9);
  EXPECT_NEAR(sol.objective, 0, 1e-9);
}

TEST(MaxRev, HydroWithoutFutureValueTurbinesAtMax) {
  auto sys = cases::toy();
  Case s(sys, flat(2, 1, 30));
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  SddpEngine<MaxRevPolicy> eng(pol, s.ctx(), {});
  const auto run = eng.solve_stage(0, 0, eng.initial_state(0), FutureValueFunction(ValueSense::Benefit, 2));
  // Both thermals cost more than the spot; only the water is sold.
  EXPECT_NEAR(run.result.sol.primal[*run.result.lp.find_variable("u[0]")], 20, 1e-9);
  EXPECT_NEAR(run.result.sol.objective, 20 * 30, 1e-9);
}

TEST(MaxRev, PureThermalProfitMatchesClosedForm) {
  SystemModel sys;
  sys.horizon.stages = 4;
  sys.horizon.scenarios = 6;
  sys.horizon.openings = 3;
  sys.horizon.block_weights = {0.25, 0.75};
  sys.horizon.stage_hours = 100;
  for (int t = 0; t < 4; ++t) sys.horizon.demand.push_back({50, 50});
  sys.thermals = {{"a", 20, 10}, {"b", 45, 7}};
  sys.finalize();
  Rng rng(4, 0);
  SpotScenarios spots(4, std::vector<PriceVector>(6));
  for (auto& st : spots)
    for (auto& p : st) p = {80 * rng.uniform(), 80 * rng.uniform()};
  Case s(sys, spots, 2);
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  const auto r = run_policy(pol, s.sys, s.ctx());
  double expect = 0;
  for (int t = 0; t < 4; ++t)
    for (int sc = 0; sc < 6; ++sc)
      for (int b = 0; b < 2; ++b)
        for (const auto& g : sys.thermals)
          expect += std::max(spots[t][sc][b] - g.cost, 0.0) * g.capacity * sys.horizon.block_hours(b) / 6;
  EXPECT_NEAR(r.simulation.expected_value(), expect, 1e-6 * expect);
  // Dispatch iff the spot covers the variable cost.
  for (int t = 0; t < 4; ++t)
    for (int sc = 0; sc < 6; ++sc)
      for (int b = 0; b < 2; ++b) {
        double q = 0;
        for (const auto& g : sys.thermals) q += spots[t][sc][b] >= g.cost ? g.capacity : 0;
        EXPECT_NEAR(r.simulation.delta_mw[(t * 2 + b) * 6 + sc], q, 1e-6);
      }
}

TEST(MaxRev, HydroSavesWaterForTheExpensiveStage) {
  auto sys = cases::toy();
  sys.thermals.clear();
  sys.agents.clear();
  sys.finalize();
  Case s(sys, SpotScenarios{{{10}}, {{100}}});
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  const auto r = run_policy(pol, s.sys, s.ctx());
  EXPECT_TRUE(r.report.converged);
  EXPECT_NEAR(r.simulation.delta_mw[0], 0, 1e-9);
  EXPECT_NEAR(r.simulation.delta_mw[1], 20, 1e-9);
  EXPECT_NEAR(r.simulation.expected_value(), 2000, 1e-6);
}

TEST(MaxRev, BenefitBoundIsNonincreasing) {
  Rng rng(9, 0);
  for (int trial = 0; trial < 3; ++trial) {
    auto sys = oracle::random_small_system(rng);
    SpotScenarios spots(sys.horizon.stages, std::vector<PriceVector>(sys.horizon.scenarios));
    for (auto& st : spots)
      for (auto& p : st) {
        p.clear();
        for (int b = 0; b < sys.horizon.blocks(); ++b) p.push_back(200 * rng.uniform());
      }
    Case s(sys, spots, 2);
    MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
    SddpOptions opt;
    opt.tree_mode = true;
    opt.max_iterations = opt.min_iterations = 10;
    const auto r = run_policy(pol, s.sys, s.ctx(), opt);
    for (std::size_t k = 1; k < r.history.size(); ++k)
      EXPECT_LE(r.history[k].bound, r.history[k - 1].bound + 1e-9 * (1 + std::abs(r.history[k - 1].bound)));
    for (std::size_t k = 0; k < r.history.size(); ++k) EXPECT_FALSE(check_convergence({r.history[k]}, ValueSense::Benefit).bound_anomaly);
  }
}

TEST(MaxRev, RandomSpotDrawStaysInCluster) {
  SpotScenarios spots{{{10}, {11}, {50}, {52}}};
  Case s(one_thermal(1, 1, 1, 4), spots, 2);
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots, true, 3);
  for (int sc = 0; sc < 4; ++sc) {
    const double p = pol.spot(0, sc)[0];
    EXPECT_EQ(p > 30, spots[0][sc][0] > 30);
  }
}

TEST(MaxRev, MissingClusterAssignmentThrows) {
  Case s(one_thermal(15, 10), flat(1, 1, 20));
  MaxRevPolicy pol(s.sys, 0, s.chain, s.spots);
  EXPECT_THROW(pol.cluster(0, 5), std::out_of_range);
}

TEST(NashBid, ConcaveCurveOptimum) {
  Case s(one_thermal(0, 8), flat(1, 1, 0));
  const auto curves = single_curve(1, concave_hull({{0, 0}, {3, 60}, {8, 80}}));
  NashBidPolicy pol(s.sys, 0, s.chain, curves);
  const auto lp = pol.build(0, 0, {{}, {}}).lp;
  const auto sol = solve(lp);
  EXPECT_NEAR(delta_of(sol, lp), 8, 1e-9);
  EXPECT_NEAR(sol.objective, 80, 1e-9);
}

TEST(NashBid, LinearCurveWithProfitableMarginDispatchesFully) {
  Case s(one_thermal(5, 10), flat(1, 1, 0));
  const auto curves = single_curve(1, concave_hull({{0, 0}, {10, 100}}));
  NashBidPolicy pol(s.sys, 0, s.chain, curves);
  const auto lp = pol.build(0, 0, {{}, {}}).lp;
  const auto sol = solve(lp);
  EXPECT_NEAR(delta_of(sol, lp), 10, 1e-9);
  EXPECT_NEAR(sol.objective, 50, 1e-9);
}

TEST(NashBid, EmptyAgent) {
  Case s(one_thermal(5, 0), flat(1, 1, 0));
  RevenueCurve c;
  c.vertices = {{0, 0}};
  NashBidPolicy pol(s.sys, 0, s.chain, single_curve(1, c));
  const auto lp = pol.build(0, 0, {{}, {}}).lp;
  const auto sol = solve(lp);
  EXPECT_NEAR(delta_of(sol, lp), 0, 1e-12);
  EXPECT_NEAR(sol.objective, 0, 1e-12);
}

TEST(NashBid, RejectsNonConcaveCurves) {
  Case s(one_thermal(5, 10), flat(1, 1, 0));
  RevenueCurve c;
  c.vertices = {{0, 0}, {5, 10}, {10, 100}};
  EXPECT_THROW(NashBidPolicy(s.sys, 0, s.chain, single_curve(1, c)), std::invalid_argument);
}

TEST(NashBid, LinearCurveReducesToMaxRev) {
  Rng rng(12, 0);
  for (int trial = 0; trial < 5; ++trial) {
    auto sys = oracle::random_small_system(rng);
    sys.horizon.block_weights = {1.0};
    for (auto& d : sys.horizon.demand) d.resize(1);
    sys.validate();
    SpotScenarios spots(sys.horizon.stages, std::vector<PriceVector>(sys.horizon.scenarios));
    RevenueCurves curves(sys.horizon.stages, std::vector<std::vector<RevenueCurve>>(sys.horizon.scenarios));
    for (int t = 0; t < sys.horizon.stages; ++t)
      for (int sc = 0; sc < sys.horizon.scenarios; ++sc) {
        const double p = 150 * rng.uniform();
        spots[t][sc] = {p};
        const double emax = system_view(sys).max_generation(sys, t, 0, sc);
        curves[t][sc] = {concave_hull({{0, 0}, {emax, p * emax}})};
      }
    Case s(sys, spots, 2);
    MaxRevPolicy mr(s.sys, 0, s.chain, s.spots);
    NashBidPolicy nb(s.sys, 0, s.chain, curves);
    SddpOptions opt;
    opt.max_iterations = 20;
    const auto a = run_policy(mr, s.sys, s.ctx(), opt);
    const auto b = run_policy(nb, s.sys, s.ctx(), opt);
    EXPECT_NEAR(a.report.lower_bound, b.report.lower_bound, 1e-6 * (1 + std::abs(a.report.lower_bound)));
    for (int t = 0; t < sys.horizon.stages; ++t) {
      const auto pa = solve(mr.build(t, 0, SddpEngine<MaxRevPolicy>(mr, s.ctx(), opt).initial_state(0)).lp);
      const auto pb = solve(nb.build(t, 0, SddpEngine<NashBidPolicy>(nb, s.ctx(), opt).initial_state(0)).lp);
      EXPECT_NEAR(pa.objective, pb.objective, 1e-6 * (1 + std::abs(pa.objective)));
    }
  }
}

TEST(NashBid, MakerValueDominatesTakerAtTheRealizedSpot) {
  // Rivals offer 10 MW at 10, 20 and 30; demand 25; the agent has 10 MW at zero cost.
  const std::vector<BidSegment> rivals{{10, 10}, {20, 10}, {30, 10}};
  const double demand = 25, deficit = 1000;
  Case s(one_thermal(0, 10), flat(1, 1, 0));
  const double spot = clear({{0, 10}, {10, 10}, {20, 10}, {30, 10}}, demand, deficit).spot;
  Case taker(one_thermal(0, 10), flat(1, 1, spot));
  const auto curves = single_curve(1, concave_hull(sawtooth_revenue(rivals, demand, 10, deficit)));
  const auto vn = solve(NashBidPolicy(s.sys, 0, s.chain, curves).build(0, 0, {{}, {}}).lp).objective;
  const auto vt = solve(MaxRevPolicy(taker.sys, 0, taker.chain, taker.spots).build(0, 0, {{}, {}}).lp).objective;
  EXPECT_GE(vn, vt - 1e-9);
}
