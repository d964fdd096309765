#pragma once

// Single-agent revenue recursions. MaxRev sells the agent's output at a given
// spot (price taker); NashBid replaces the linear revenue by a concave
// revenue curve of the residual demand (price maker). Both carry future
// benefit functions labeled by the spot-price Markov cluster.

#include <hydromarket/dispatch.hpp>
#include <hydromarket/market.hpp>
#include <hydromarket/markov.hpp>
#include <hydromarket/sddp.hpp>
#include <hydromarket/system_model.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hydromarket {

using SpotScenarios = std::vector<std::vector<PriceVector>>;  // [t][s][b]
using RevenueCurves = std::vector<std::vector<std::vector<RevenueCurve>>>;  // [t][s][b]

namespace detail {
inline constexpr std::uint64_t kSpotDrawTag = 0x53505452ull;  // "SPTR"
}

struct AgentStage {
  StageProblem problem;
  std::vector<int> delta;    // per block, MWh delivered
  std::vector<int> thermal;  // [j * B + b]
};

/// Physics shared by both recursions: the agent's plants with delivered
/// energy delta_b = sum e + sum g + renewables.
class AgentPolicyBase {
 public:
  AgentPolicyBase(const SystemModel& sys, int agent, const MarkovChain& chain)
      : sys_(sys), view_(agent_partition(sys, agent)), chain_(chain) {}

  ValueSense sense() const { return ValueSense::Benefit; }
  int stages() const { return sys_.horizon.stages; }
  std::vector<int> hydros() const { return view_.hydros; }
  std::vector<double> initial_storage() const {
    std::vector<double> v;
    for (int i : view_.hydros) v.push_back(sys_.hydros[i].initial_storage);
    return v;
  }
  int cluster(int t, int s) const {
    if (t >= chain_.num_stages() || s >= static_cast<int>(chain_.stages[t].assignment.size()))
      throw std::out_of_range("no cluster assignment for stage " + std::to_string(t) + ", scenario " +
                              std::to_string(s));
    return chain_.cluster_of(t, s);
  }
  int opening_label(int t, int s, int l) const { return chain_.opening_label(t, s, l); }

  const AgentView& view() const { return view_; }
  const SystemModel& system() const { return sys_; }
  const MarkovChain& chain() const { return chain_; }

  double max_delivery(int t, int b, int s) const {
    return view_.max_generation(sys_, t, b, s) * sys_.horizon.block_hours(b);
  }

  // Adds one copy of the agent's stage physics to lp; `tag` keeps names unique.
  AgentStage add_physics(LinearProgram& lp, int t, int s, const StageState& st, const std::string& tag = "") const {
    AgentStage a;
    const int B = sys_.horizon.blocks();
    for (int b = 0; b < B; ++b)
      a.delta.push_back(lp.add_variable(detail::idx(("delta" + tag).c_str(), b), 0.0, max_delivery(t, b, s)));
    std::vector<std::vector<Term>> rows(B);
    for (int b = 0; b < B; ++b) rows[b].push_back({a.delta[b], 1.0});
    for (int j : view_.thermals)
      for (int b = 0; b < B; ++b) {
        const auto& g = sys_.thermals[j];
        const int v = lp.add_variable(detail::idx(("g" + tag).c_str(), j, b), 0.0,
                                      g.capacity * sys_.horizon.block_hours(b), -g.cost);
        a.thermal.push_back(v);
        rows[b].push_back({v, -1.0});
      }
    const auto hb = detail::add_hydro_physics(lp, sys_, view_.hydros, st, tag);
    for (std::size_t h = 0; h < view_.hydros.size(); ++h)
      for (int b = 0; b < B; ++b) rows[b].push_back({hb.energy[h][b], -1.0});
    for (int b = 0; b < B; ++b) {
      double r = 0.0;
      for (int k : view_.renewables) r += sys_.renewables[k].at(t, b, s);
      lp.add_constraint(detail::idx(("delivery" + tag).c_str(), b), rows[b], Relation::Equal,
                        r * sys_.horizon.block_hours(b));
    }
    a.problem.storage_out = hb.storage_out;
    a.problem.hydro_balance = hb.hydro_balance;
    return a;
  }

  AgentStage build_physics(int t, int s, const StageState& st) const {
    LinearProgram lp(Sense::Maximize);
    auto a = add_physics(lp, t, s, st);
    a.problem.lp = std::move(lp);
    return a;
  }

 protected:
  const SystemModel& sys_;
  AgentView view_;
  const MarkovChain& chain_;
};

/// Price taker: maximize sum_b spot_b * delta_b - thermal cost + future benefit.
class MaxRevPolicy : public AgentPolicyBase {
 public:
  MaxRevPolicy(const SystemModel& sys, int agent, const MarkovChain& chain, SpotScenarios spots,
               bool random_spot = false, std::uint64_t seed = 0)
      : AgentPolicyBase(sys, agent, chain), spots_(std::move(spots)), random_spot_(random_spot), seed_(seed) {}

  /// Spot vector seen in (t, s): the scenario's own, or a random member of its cluster.
  const PriceVector& spot(int t, int s) const {
    if (!random_spot_) return spots_.at(t).at(s);
    const auto members = chain_.members(t, cluster(t, s));
    Rng rng(seed_, stream_id(detail::kSpotDrawTag, {t, s}));
    return spots_[t][members[rng.uniform_int(static_cast<int>(members.size()))]];
  }

  StageProblem build(int t, int s, const StageState& st) const {
    auto a = build_physics(t, s, st);
    const auto& p = spot(t, s);
    for (std::size_t b = 0; b < a.delta.size(); ++b) a.problem.lp.set_cost(a.delta[b], p.at(b));
    return std::move(a.problem);
  }

 private:
  SpotScenarios spots_;
  bool random_spot_;
  std::uint64_t seed_;
};

/// Price maker: the revenue of block b is a concave curve R(e) (currency/h,
/// e in MW) expressed as r_b <= slope * delta_b + intercept * hours_b per facet.
class NashBidPolicy : public AgentPolicyBase {
 public:
  NashBidPolicy(const SystemModel& sys, int agent, const MarkovChain& chain, RevenueCurves curves)
      : AgentPolicyBase(sys, agent, chain), curves_(std::move(curves)) {
    for (const auto& st : curves_)
      for (const auto& sc : st)
        for (const auto& c : sc)
          if (!c.is_concave(1e-9)) throw std::invalid_argument("NashBid: revenue curve is not concave");
  }

  const RevenueCurve& curve(int t, int s, int b) const { return curves_.at(t).at(s).at(b); }

  StageProblem build(int t, int s, const StageState& st) const {
    auto a = build_physics(t, s, st);
    auto& lp = a.problem.lp;
    for (std::size_t b = 0; b < a.delta.size(); ++b) {
      const auto& c = curve(t, s, static_cast<int>(b));
      const double hrs = sys_.horizon.block_hours(static_cast<int>(b));
      const auto& d = lp.variable(a.delta[b]);
      lp.set_bounds(a.delta[b], 0.0, std::min(d.upper, c.e_max() * hrs));
      const auto facets = c.facets();
      if (facets.empty()) {
        lp.set_bounds(a.delta[b], 0.0, 0.0);
        continue;
      }
      const int r = lp.add_variable(detail::idx("revenue", static_cast<int>(b)), -kInf, kInf, 1.0);
      int k = 0;
      for (const auto& f : facets)
        lp.add_constraint(detail::idx("facet", static_cast<int>(b), k++), {{r, 1.0}, {a.delta[b], -f.slope}},
                          Relation::LessEqual, f.intercept * hrs);
    }
    return std::move(a.problem);
  }

 private:
  RevenueCurves curves_;
};

// Recursion driver -----------------------------------------------------------

struct PolicySimulation {
  int stages = 0, blocks = 0, scenarios = 0, hydros = 0;
  std::vector<double> delta_mw;   // [t][b][s]
  std::vector<double> storage;    // [t][s][h]
  std::vector<double> immediate;  // [t][s] revenue minus cost of the stage
  double expected_value() const {
    double v = 0.0;
    for (double x : immediate) v += x;
    return scenarios ? v / scenarios : 0.0;
  }
};

struct PolicyResult {
  FutureValueFunction fbf{ValueSense::Benefit};
  std::vector<IterationRecord> history;
  ConvergenceReport report;
  PolicySimulation simulation;
};

template <StagePolicy P>
PolicySimulation simulate_policy(const P& policy, const SystemModel& sys, SddpContext ctx,
                                 const FutureValueFunction& fbf, const SddpOptions& opt) {
  SddpEngine<P> engine(policy, ctx, opt);
  PolicySimulation sim;
  sim.stages = sys.horizon.stages;
  sim.blocks = sys.horizon.blocks();
  sim.scenarios = ctx.scenarios.scenarios;
  sim.hydros = static_cast<int>(policy.hydros().size());
  sim.delta_mw.assign(static_cast<std::size_t>(sim.stages) * sim.blocks * sim.scenarios, 0.0);
  sim.storage.assign(static_cast<std::size_t>(sim.stages) * sim.scenarios * sim.hydros, 0.0);
  sim.immediate.assign(static_cast<std::size_t>(sim.stages) * sim.scenarios, 0.0);
  engine.simulate(fbf, 0, [&](const StageRun& run) {
    const int t = run.stage, s = run.scenario;
    const auto& lp = run.result.lp;
    for (int b = 0; b < sim.blocks; ++b)
      sim.delta_mw[(static_cast<std::size_t>(t) * sim.blocks + b) * sim.scenarios + s] =
          run.result.sol.primal[*lp.find_variable(detail::idx("delta", b))] / sys.horizon.block_hours(b);
    for (int h = 0; h < sim.hydros; ++h)
      sim.storage[(static_cast<std::size_t>(t) * sim.scenarios + s) * sim.hydros + h] =
          run.result.sol.primal[run.problem.storage_out[h]];
    sim.immediate[static_cast<std::size_t>(t) * sim.scenarios + s] = run.immediate;
  });
  return sim;
}

template <StagePolicy P>
PolicyResult run_policy(const P& policy, const SystemModel& sys, SddpContext ctx, const SddpOptions& opt = {}) {
  auto r = run_sddp(policy, ctx, opt);
  PolicyResult out;
  out.simulation = simulate_policy(policy, sys, ctx, r.fvf, opt);
  out.fbf = std::move(r.fvf);
  out.history = std::move(r.history);
  out.report = r.report;
  return out;
}

}  // namespace hydromarket
