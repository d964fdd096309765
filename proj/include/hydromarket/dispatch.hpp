#pragma once

// Cost-based centralized dispatch: the system operator's stage LP, the
// recursion, and a final simulation that records spot prices and water values.

#include <hydromarket/sddp.hpp>
#include <hydromarket/system_model.hpp>

#include <fstream>
#include <string>
#include <vector>

namespace hydromarket {

namespace detail {

inline std::string idx(const char* name, int a) { return std::string(name) + "[" + std::to_string(a) + "]"; }
inline std::string idx(const char* name, int a, int b) {
  return std::string(name) + "[" + std::to_string(a) + "][" + std::to_string(b) + "]";
}

// Adds the hydro physics of `hydros` (system indices) to lp: turbine, spill,
// end storage, per-block generation, water balance and energy conversion.
// Returns the per-block energy variables e[h][b].
struct HydroBlock {
  std::vector<int> storage_out, hydro_balance, turbine, spill;
  std::vector<std::vector<int>> energy;  // [h][b] MWh
};

inline HydroBlock add_hydro_physics(LinearProgram& lp, const SystemModel& sys, const std::vector<int>& hydros,
                                    const StageState& st, const std::string& tag = "") {
  const int B = sys.horizon.blocks();
  const std::size_t H = hydros.size();
  HydroBlock hb;
  std::vector<int> local(sys.hydros.size(), -1);
  for (std::size_t h = 0; h < H; ++h) local[hydros[h]] = static_cast<int>(h);
  for (std::size_t h = 0; h < H; ++h) {
    const auto& p = sys.hydros[hydros[h]];
    const int i = hydros[h];
    hb.turbine.push_back(lp.add_variable(idx(("u" + tag).c_str(), i), 0.0, p.max_turbine));
    hb.spill.push_back(lp.add_variable(idx(("x" + tag).c_str(), i), 0.0, kInf));
    hb.storage_out.push_back(lp.add_variable(idx(("v" + tag).c_str(), i), 0.0, p.max_storage));
    std::vector<int> e;
    for (int b = 0; b < B; ++b)
      e.push_back(lp.add_variable(idx(("e" + tag).c_str(), i, b), 0.0, p.max_generation * sys.horizon.block_hours(b)));
    hb.energy.push_back(e);
  }
  for (std::size_t h = 0; h < H; ++h) {
    const int i = hydros[h];
    // v_out + u + x - sum_{upstream}(u + x) = v_in + inflow
    std::vector<Term> row{{hb.storage_out[h], 1.0}, {hb.turbine[h], 1.0}, {hb.spill[h], 1.0}};
    for (int up : sys.upstream[i]) {
      if (local[up] < 0) continue;  // upstream plant of another owner: not modeled here
      row.push_back({hb.turbine[local[up]], -1.0});
      row.push_back({hb.spill[local[up]], -1.0});
    }
    hb.hydro_balance.push_back(lp.add_constraint(idx(("hydro_balance" + tag).c_str(), i), row, Relation::Equal,
                                                 st.storage[h] + st.window[h][0]));
    std::vector<Term> conv{{hb.turbine[h], -sys.hydros[i].production_factor}};
    for (int e : hb.energy[h]) conv.push_back({e, 1.0});
    lp.add_constraint(idx(("conversion" + tag).c_str(), i), conv, Relation::Equal, 0.0);
  }
  return hb;
}

}  // namespace detail

class DispatchPolicy {
 public:
  DispatchPolicy(const SystemModel& sys, const ScenarioSet&) : sys_(sys) {
    for (std::size_t i = 0; i < sys.hydros.size(); ++i) hydros_.push_back(static_cast<int>(i));
  }

  ValueSense sense() const { return ValueSense::Cost; }
  int stages() const { return sys_.horizon.stages; }
  std::vector<int> hydros() const { return hydros_; }
  std::vector<double> initial_storage() const {
    std::vector<double> v;
    for (const auto& h : sys_.hydros) v.push_back(h.initial_storage);
    return v;
  }
  int cluster(int, int) const { return -1; }
  int opening_label(int, int, int) const { return -1; }

  /// Net energy to serve in block b (MWh): demand minus renewables, floored at 0.
  double net_load(int t, int b, int s) const {
    return std::max(0.0, sys_.horizon.demand[t][b] - sys_.renewable_total(t, b, s)) * sys_.horizon.block_hours(b);
  }

  StageProblem build(int t, int s, const StageState& st) const {
    StageProblem pb;
    auto& lp = pb.lp;
    const int B = sys_.horizon.blocks();
    const double deficit = sys_.deficit_cost();
    std::vector<std::vector<Term>> balance(B);
    for (std::size_t j = 0; j < sys_.thermals.size(); ++j)
      for (int b = 0; b < B; ++b) {
        const auto& g = sys_.thermals[j];
        const int v = lp.add_variable(detail::idx("g", static_cast<int>(j), b), 0.0,
                                      g.capacity * sys_.horizon.block_hours(b), g.cost);
        balance[b].push_back({v, 1.0});
      }
    for (int b = 0; b < B; ++b) balance[b].push_back({lp.add_variable(detail::idx("def", b), 0.0, kInf, deficit), 1.0});
    const auto hb = detail::add_hydro_physics(lp, sys_, hydros_, st);
    for (std::size_t h = 0; h < hydros_.size(); ++h)
      for (int b = 0; b < B; ++b) balance[b].push_back({hb.energy[h][b], 1.0});
    for (int b = 0; b < B; ++b)
      lp.add_constraint(detail::idx("load_balance", b), balance[b], Relation::Equal, net_load(t, b, s));
    pb.storage_out = hb.storage_out;
    pb.hydro_balance = hb.hydro_balance;
    return pb;
  }

 private:
  const SystemModel& sys_;
  std::vector<int> hydros_;
};

struct DispatchOptions {
  SddpOptions sddp;
  bool out_of_sample = false;
  std::uint64_t out_of_sample_seed = 1;
};

struct DispatchResult {
  int stages = 0, blocks = 0, scenarios = 0, thermals = 0, hydros = 0;
  std::vector<double> spot;           // [t][b][s] currency/MWh
  std::vector<double> thermal_mw;     // [t][b][s][j]
  std::vector<double> hydro_mw;       // [t][b][s][i]
  std::vector<double> deficit_mw;     // [t][b][s]
  std::vector<double> turbined;       // [t][s][i] hm3
  std::vector<double> spilled;        // [t][s][i] hm3
  std::vector<double> storage;        // [t][s][i] end-of-stage hm3
  std::vector<double> water_value;    // [t][s][i] currency/hm3, cost saved per extra unit of water
  std::vector<double> immediate_cost; // [t][s]
  std::vector<double> dual_gap;       // [t][s] |primal - dual objective| of each solved stage
  FutureValueFunction fvf;
  std::vector<IterationRecord> history;
  ConvergenceReport report;
  bool converged = false;

  std::size_t tbs(int t, int b, int s) const { return (static_cast<std::size_t>(t) * blocks + b) * scenarios + s; }
  std::size_t ts(int t, int s) const { return static_cast<std::size_t>(t) * scenarios + s; }

  double spot_at(int t, int b, int s) const { return spot[tbs(t, b, s)]; }
  double expected_cost() const {
    double c = 0.0;
    for (double x : immediate_cost) c += x;
    return c / scenarios;
  }
  // spots[t][s][b], the layout used by the Markov chain.
  std::vector<std::vector<std::vector<double>>> spot_vectors() const {
    std::vector<std::vector<std::vector<double>>> out(stages, std::vector<std::vector<double>>(scenarios));
    for (int t = 0; t < stages; ++t)
      for (int s = 0; s < scenarios; ++s)
        for (int b = 0; b < blocks; ++b) out[t][s].push_back(spot_at(t, b, s));
    return out;
  }
};

/// Left-derivative spot of each block: the balance dual with the block's
/// net load reduced by a tiny amount, re-solved with the same cut pools.
inline std::vector<double> left_spot(const StageRun& run, const FutureValueFunction& fvf, int blocks,
                                     int all_cuts_below = 10) {
  std::vector<double> spot(blocks, 0.0);
  for (int b = 0; b < blocks; ++b) {
    const auto row = run.problem.lp.find_constraint(detail::idx("load_balance", b));
    if (!row) throw std::logic_error("stage LP has no load balance row");
    const double rhs = run.problem.lp.constraint(*row).rhs;
    if (rhs <= 0.0) continue;
    LinearProgram lp = run.problem.lp;
    lp.set_rhs(*row, rhs - std::min(1e-7 * std::max(1.0, rhs), 0.5 * rhs));
    const auto cs = solve_with_cuts(lp, run.links, fvf, run.stage + 1, all_cuts_below);
    if (!cs.sol.optimal()) throw StageFailure("perturbed dispatch LP not optimal", run.stage, run.scenario);
    spot[b] = cs.sol.dual[*row];
  }
  return spot;
}

inline DispatchResult simulate_dispatch(const SystemModel& sys, const ScenarioSet& sc, const FutureValueFunction& fvf,
                                        const SddpOptions& opt) {
  DispatchPolicy policy(sys, sc);
  SddpEngine<DispatchPolicy> engine(policy, {sys.inflow, sc}, opt);
  DispatchResult r;
  r.stages = sys.horizon.stages;
  r.blocks = sys.horizon.blocks();
  r.scenarios = sc.scenarios;
  r.thermals = static_cast<int>(sys.thermals.size());
  r.hydros = static_cast<int>(sys.hydros.size());
  const std::size_t TBS = static_cast<std::size_t>(r.stages) * r.blocks * r.scenarios;
  const std::size_t TS = static_cast<std::size_t>(r.stages) * r.scenarios;
  r.spot.assign(TBS, 0.0);
  r.deficit_mw.assign(TBS, 0.0);
  r.thermal_mw.assign(TBS * r.thermals, 0.0);
  r.hydro_mw.assign(TBS * r.hydros, 0.0);
  r.turbined.assign(TS * r.hydros, 0.0);
  r.spilled.assign(TS * r.hydros, 0.0);
  r.storage.assign(TS * r.hydros, 0.0);
  r.water_value.assign(TS * r.hydros, 0.0);
  r.immediate_cost.assign(TS, 0.0);
  r.dual_gap.assign(TS, 0.0);
  engine.simulate(fvf, 0, [&](const StageRun& run) {
    const int t = run.stage, s = run.scenario;
    const auto& lp = run.result.lp;
    const auto& x = run.result.sol.primal;
    const auto spot = left_spot(run, fvf, r.blocks, opt.all_cuts_below);
    for (int b = 0; b < r.blocks; ++b) {
      const double hrs = sys.horizon.block_hours(b);
      r.spot[r.tbs(t, b, s)] = spot[b];
      r.deficit_mw[r.tbs(t, b, s)] = x[*lp.find_variable(detail::idx("def", b))] / hrs;
      for (int j = 0; j < r.thermals; ++j)
        r.thermal_mw[r.tbs(t, b, s) * r.thermals + j] = x[*lp.find_variable(detail::idx("g", j, b))] / hrs;
      for (int i = 0; i < r.hydros; ++i)
        r.hydro_mw[r.tbs(t, b, s) * r.hydros + i] = x[*lp.find_variable(detail::idx("e", i, b))] / hrs;
    }
    for (int i = 0; i < r.hydros; ++i) {
      const std::size_t k = r.ts(t, s) * r.hydros + i;
      r.turbined[k] = x[*lp.find_variable(detail::idx("u", i))];
      r.spilled[k] = x[*lp.find_variable(detail::idx("x", i))];
      r.storage[k] = x[run.problem.storage_out[i]];
      r.water_value[k] = -run.result.sol.dual[run.problem.hydro_balance[i]];
    }
    r.immediate_cost[r.ts(t, s)] = run.immediate;
    r.dual_gap[r.ts(t, s)] = std::abs(run.result.sol.objective - dual_objective(lp, run.result.sol));
  });
  return r;
}

/// Runs the recursion to convergence (or the iteration cap) and a final
/// simulation on the forward scenarios (or a fresh out-of-sample set).
inline DispatchResult run_centralized(const SystemModel& sys, const ScenarioSet& sc, const DispatchOptions& opt = {}) {
  DispatchPolicy policy(sys, sc);
  auto rec = run_sddp(policy, {sys.inflow, sc}, opt.sddp);
  DispatchResult r;
  if (opt.out_of_sample) {
    auto fresh = generate_scenarios(sys.inflow, sc.stages, sc.scenarios, sc.openings, opt.out_of_sample_seed);
    fresh.residuals = sc.residuals;
    r = simulate_dispatch(sys, fresh, rec.fvf, opt.sddp);
  } else {
    r = simulate_dispatch(sys, sc, rec.fvf, opt.sddp);
  }
  r.fvf = std::move(rec.fvf);
  r.history = std::move(rec.history);
  r.report = rec.report;
  r.converged = rec.report.converged;
  return r;
}

// CSV tables ------------------------------------------------------------------

inline void write_dispatch_csv(const DispatchResult& r, const SystemModel& sys, const std::string& dir) {
  auto open = [&](const std::string& name) {
    std::ofstream f(dir + "/" + name);
    if (!f) throw std::runtime_error("cannot write " + dir + "/" + name);
    f.precision(12);
    return f;
  };
  {
    auto f = open("spot.csv");
    f << "stage,block,scenario,price\n";
    for (int t = 0; t < r.stages; ++t)
      for (int b = 0; b < r.blocks; ++b)
        for (int s = 0; s < r.scenarios; ++s) f << t << ',' << b << ',' << s << ',' << r.spot_at(t, b, s) << '\n';
  }
  {
    auto f = open("storage.csv");
    f << "stage,scenario,hydro,storage,turbined,spilled,water_value\n";
    for (int t = 0; t < r.stages; ++t)
      for (int s = 0; s < r.scenarios; ++s)
        for (int i = 0; i < r.hydros; ++i) {
          const std::size_t k = r.ts(t, s) * r.hydros + i;
          f << t << ',' << s << ',' << csv_field(sys.hydros[i].id) << ',' << r.storage[k] << ',' << r.turbined[k] << ','
            << r.spilled[k] << ',' << r.water_value[k] << '\n';
        }
  }
  {
    auto f = open("generation.csv");
    f << "stage,block,scenario,plant,kind,mw\n";
    for (int t = 0; t < r.stages; ++t)
      for (int b = 0; b < r.blocks; ++b)
        for (int s = 0; s < r.scenarios; ++s) {
          const std::size_t k = r.tbs(t, b, s);
          for (int j = 0; j < r.thermals; ++j)
            f << t << ',' << b << ',' << s << ',' << csv_field(sys.thermals[j].id) << ",thermal," << r.thermal_mw[k * r.thermals + j]
              << '\n';
          for (int i = 0; i < r.hydros; ++i)
            f << t << ',' << b << ',' << s << ',' << csv_field(sys.hydros[i].id) << ",hydro," << r.hydro_mw[k * r.hydros + i] << '\n';
          for (const auto& p : sys.renewables)
            f << t << ',' << b << ',' << s << ',' << csv_field(p.id) << ",renewable," << p.at(t, b, s) << '\n';
          f << t << ',' << b << ',' << s << ",deficit,deficit," << r.deficit_mw[k] << '\n';
        }
  }
  {
    auto f = open("convergence_sddp.csv");
    f << "iteration,bound,estimate,std_error,cuts\n";
    for (const auto& h : r.history)
      f << h.iteration << ',' << h.bound << ',' << h.estimate << ',' << h.std_error << ',' << h.cuts << '\n';
  }
}

}  // namespace hydromarket
