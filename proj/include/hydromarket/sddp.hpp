#pragma once

// Multi-stage recursion machinery shared by the centralized dispatch and the
// agents' revenue recursions.
//
// State of a stage: storage per hydro plus an inflow window per hydro
// (window[0] is the stage's own inflow, window[j] the inflow j stages back).
// A stage LP carries one future variable per opening; the next-stage window of
// opening l is the AR map of the current window plus the opening residual, so
// it is a constant of the stage LP and cut rows only involve storage variables.

#include <hydromarket/inflow.hpp>
#include <hydromarket/lp.hpp>
#include <hydromarket/parallel.hpp>
#include <hydromarket/rng.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket {

enum class ValueSense { Cost, Benefit };

using Window = std::vector<std::vector<double>>;  // [hydro][lag]

struct StageState {
  std::vector<double> storage;  // per policy hydro
  Window window;
};

struct Cut {
  int stage = 0;
  int cluster = -1;
  double intercept = 0.0;
  std::vector<double> storage_coeffs;
  Window inflow_coeffs;

  double evaluate(const std::vector<double>& v, const Window& w) const {
    double x = intercept;
    for (std::size_t h = 0; h < storage_coeffs.size(); ++h) x += storage_coeffs[h] * v[h];
    for (std::size_t h = 0; h < inflow_coeffs.size(); ++h)
      for (std::size_t j = 0; j < inflow_coeffs[h].size(); ++j) x += inflow_coeffs[h][j] * w[h][j];
    return x;
  }
  double evaluate(const StageState& s) const { return evaluate(s.storage, s.window); }
};

/// Cut pools per stage and cluster label (-1 = unlabeled). Cost functions are
/// the max of their cuts, benefit functions the min; an empty pool is 0.
class FutureValueFunction {
 public:
  explicit FutureValueFunction(ValueSense sense = ValueSense::Cost, int stages = 0)
      : sense_(sense), pools_(std::max(0, stages)) {}

  ValueSense sense() const { return sense_; }
  int stages() const { return static_cast<int>(pools_.size()); }

  void add(Cut c) {
    if (c.stage < 0 || c.stage >= stages()) throw std::out_of_range("cut stage out of range");
    pools_[c.stage][c.cluster].push_back(std::move(c));
  }

  const std::vector<Cut>& cuts(int stage, int label) const {
    static const std::vector<Cut> none;
    if (stage < 0 || stage >= stages()) return none;
    const auto it = pools_[stage].find(label);
    return it == pools_[stage].end() ? none : it->second;
  }

  std::vector<int> labels(int stage) const {
    std::vector<int> out;
    for (const auto& [k, v] : pools_.at(stage)) out.push_back(k);
    return out;
  }

  double evaluate(int stage, int label, const std::vector<double>& v, const Window& w) const {
    const auto& pool = cuts(stage, label);
    if (pool.empty()) return 0.0;
    double best = pool.front().evaluate(v, w);
    for (const auto& c : pool) {
      const double x = c.evaluate(v, w);
      best = sense_ == ValueSense::Cost ? std::max(best, x) : std::min(best, x);
    }
    return best;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& st : pools_)
      for (const auto& [k, v] : st) n += v.size();
    return n;
  }

 private:
  ValueSense sense_;
  std::vector<std::map<int, std::vector<Cut>>> pools_;
};

// Cut CSV: agent,stage,cluster,intercept,phi_v_<h>...,phi_a_<h>_<j>...
inline void write_cuts_csv(std::ostream& out, const FutureValueFunction& fvf, int agent = -1, bool header = true) {
  int H = -1, W = 0;
  for (int t = 0; t < fvf.stages() && H < 0; ++t)
    for (int k : fvf.labels(t))
      if (!fvf.cuts(t, k).empty()) {
        const auto& c = fvf.cuts(t, k).front();
        H = static_cast<int>(c.storage_coeffs.size());
        W = c.inflow_coeffs.empty() ? 0 : static_cast<int>(c.inflow_coeffs.front().size());
        break;
      }
  if (H < 0) H = 0;
  if (header) {
    out << "agent,stage,cluster,intercept";
    for (int h = 0; h < H; ++h) out << ",phi_v_" << h;
    for (int h = 0; h < H; ++h)
      for (int j = 0; j < W; ++j) out << ",phi_a_" << h << '_' << j;
    out << '\n';
  }
  out.precision(17);
  for (int t = 0; t < fvf.stages(); ++t)
    for (int k : fvf.labels(t))
      for (const auto& c : fvf.cuts(t, k)) {
        out << agent << ',' << c.stage << ',' << c.cluster << ',' << c.intercept;
        for (double x : c.storage_coeffs) out << ',' << x;
        for (const auto& row : c.inflow_coeffs)
          for (double x : row) out << ',' << x;
        out << '\n';
      }
}

inline void write_cuts_csv(const std::string& path, const FutureValueFunction& fvf, int agent = -1) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  write_cuts_csv(f, fvf, agent);
}

inline FutureValueFunction read_cuts_csv(const std::string& path, ValueSense sense, int stages) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  int H = 0, W = 0;
  {
    std::stringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) {
      if (col.rfind("phi_v_", 0) == 0) ++H;
      if (col.rfind("phi_a_", 0) == 0) ++W;
    }
    W = H > 0 ? W / H : 0;
  }
  FutureValueFunction fvf(sense, stages);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != 4 + H + H * W) throw std::runtime_error(path + ": malformed cut row");
    Cut c;
    c.stage = static_cast<int>(vals[1]);
    c.cluster = static_cast<int>(vals[2]);
    c.intercept = vals[3];
    c.storage_coeffs.assign(vals.begin() + 4, vals.begin() + 4 + H);
    c.inflow_coeffs.assign(H, std::vector<double>(W));
    for (int h = 0; h < H; ++h)
      for (int j = 0; j < W; ++j) c.inflow_coeffs[h][j] = vals[4 + H + h * W + j];
    fvf.add(std::move(c));
  }
  return fvf;
}

// ---------------------------------------------------------------------------
// Stage problems and cut rows.

/// What a policy hands to the engine: the stage LP without future terms.
struct StageProblem {
  LinearProgram lp;
  std::vector<int> storage_out;    // per policy hydro: end-of-stage storage variable
  std::vector<int> hydro_balance;  // per policy hydro: row whose rhs is storage_in + window[0]
};

/// Couples one future variable to the cut pool of a label at the next stage.
struct FutureLink {
  int var = -1;
  int label = -1;
  std::vector<int> storage_vars;
  Window next_window;
  std::vector<double> guess;  // storage used to pick initial cuts
};

struct ActiveCut {
  int link;
  int cut;  // index into the pool of the link's label
  int row;
};

struct CutSolve {
  LinearProgram lp;  // base LP plus the cut rows that were needed
  LpSolution sol;
  std::vector<ActiveCut> rows;
  int rounds = 0;
};

/// Solves `base` with the cut constraints of every link, adding violated
/// cut rows lazily. The result is optimal for the LP with all cut rows; rows
/// never added carry zero duals.
inline CutSolve solve_with_cuts(const LinearProgram& base, const std::vector<FutureLink>& links,
                                const FutureValueFunction& fvf, int next_stage, int all_cuts_below = 10) {
  CutSolve cs;
  cs.lp = base;
  const bool cost = fvf.sense() == ValueSense::Cost;
  std::vector<std::vector<char>> added(links.size());

  auto add_row = [&](int li, int ci) {
    const auto& link = links[li];
    const Cut& c = fvf.cuts(next_stage, link.label)[ci];
    std::vector<Term> terms{{link.var, 1.0}};
    for (std::size_t h = 0; h < link.storage_vars.size(); ++h)
      if (c.storage_coeffs[h] != 0.0) terms.push_back({link.storage_vars[h], -c.storage_coeffs[h]});
    double rhs = c.intercept;
    for (std::size_t h = 0; h < c.inflow_coeffs.size(); ++h)
      for (std::size_t j = 0; j < c.inflow_coeffs[h].size(); ++j) rhs += c.inflow_coeffs[h][j] * link.next_window[h][j];
    const int row = cs.lp.add_constraint("cut[" + std::to_string(li) + "][" + std::to_string(ci) + "]", terms,
                                         cost ? Relation::GreaterEqual : Relation::LessEqual, rhs);
    cs.rows.push_back({li, ci, row});
    added[li][ci] = 1;
  };

  for (std::size_t li = 0; li < links.size(); ++li) {
    const auto& link = links[li];
    const auto& pool = fvf.cuts(next_stage, link.label);
    added[li].assign(pool.size(), 0);
    if (pool.empty()) {
      cs.lp.set_bounds(link.var, 0.0, 0.0);
      continue;
    }
    cs.lp.set_bounds(link.var, -kInf, kInf);
    if (static_cast<int>(pool.size()) <= all_cuts_below) {
      for (std::size_t c = 0; c < pool.size(); ++c) add_row(static_cast<int>(li), static_cast<int>(c));
      continue;
    }
    int best = 0;
    double bv = pool[0].evaluate(link.guess, link.next_window);
    for (std::size_t c = 1; c < pool.size(); ++c) {
      const double x = pool[c].evaluate(link.guess, link.next_window);
      if (cost ? x > bv : x < bv) {
        bv = x;
        best = static_cast<int>(c);
      }
    }
    add_row(static_cast<int>(li), best);
  }

  while (true) {
    ++cs.rounds;
    cs.sol = solve(cs.lp);
    if (!cs.sol.optimal()) return cs;
    bool any = false;
    for (std::size_t li = 0; li < links.size(); ++li) {
      const auto& link = links[li];
      const auto& pool = fvf.cuts(next_stage, link.label);
      if (pool.empty()) continue;
      std::vector<double> v(link.storage_vars.size());
      for (std::size_t h = 0; h < v.size(); ++h) v[h] = cs.sol.primal[link.storage_vars[h]];
      const double a = cs.sol.primal[link.var];
      int worst = -1;
      double viol = 0.0;
      for (std::size_t c = 0; c < pool.size(); ++c) {
        if (added[li][c]) continue;
        const double x = pool[c].evaluate(v, link.next_window);
        const double d = cost ? x - a : a - x;
        if (d > 1e-7 * (1.0 + std::abs(x)) && d > viol) {
          viol = d;
          worst = static_cast<int>(c);
        }
      }
      if (worst >= 0) {
        add_row(static_cast<int>(li), worst);
        any = true;
      }
    }
    if (!any) return cs;
  }
}

// ---------------------------------------------------------------------------
// Policy contract and engine.

template <class P>
concept StagePolicy = requires(const P& p, int t, int s, int l, const StageState& st) {
  { p.sense() } -> std::same_as<ValueSense>;
  { p.stages() } -> std::convertible_to<int>;
  { p.hydros() } -> std::convertible_to<std::vector<int>>;
  { p.initial_storage() } -> std::convertible_to<std::vector<double>>;
  { p.build(t, s, st) } -> std::same_as<StageProblem>;
  { p.cluster(t, s) } -> std::convertible_to<int>;
  { p.opening_label(t, s, l) } -> std::convertible_to<int>;
};

struct SddpOptions {
  int max_iterations = 50;
  int min_iterations = 3;
  double z = 1.96;           // confidence multiplier of the stopping test
  bool tree_mode = false;    // forward inflows resampled from the openings
  std::uint64_t seed = 0;
  int workers = 1;
  int all_cuts_below = 10;   // pools this small are always fully included
  double time_limit_s = 0.0; // 0 = none
};

struct IterationRecord {
  int iteration = 0;
  double bound = 0.0;     // lower bound (cost) / upper bound (benefit)
  double estimate = 0.0;  // forward-sample mean of summed immediate values
  double std_error = 0.0;
  std::size_t cuts = 0;
};

struct ConvergenceReport {
  double lower_bound = 0.0;  // first-stage average objective (the bound)
  double upper_bound = 0.0;  // forward estimate
  double std_error = 0.0;
  int iterations = 0;
  bool converged = false;
  bool bound_anomaly = false;
  std::string diagnostic;
};

/// Stopping rule: the bound lies in estimate +- z*se and enough iterations ran.
/// With se = 0 the interval degenerates to |estimate - bound| <= 1e-6 (1 + |estimate|).
inline ConvergenceReport check_convergence(const std::vector<IterationRecord>& history, ValueSense sense,
                                           int min_iterations = 3, double z = 1.96) {
  if (history.empty()) throw std::invalid_argument("check_convergence: empty history");
  const auto& last = history.back();
  ConvergenceReport r;
  r.lower_bound = last.bound;
  r.upper_bound = last.estimate;
  r.std_error = last.std_error;
  r.iterations = last.iteration;
  const double slack = 1e-6 * (1.0 + std::abs(last.estimate));
  const double half = z * last.std_error;
  const bool inside = last.bound >= last.estimate - half - slack && last.bound <= last.estimate + half + slack;
  r.converged = inside && last.iteration >= min_iterations;
  // A valid bound can never sit on the wrong side of the interval.
  if (sense == ValueSense::Cost && last.bound > last.estimate + half + slack) r.bound_anomaly = true;
  if (sense == ValueSense::Benefit && last.bound < last.estimate - half - slack) r.bound_anomaly = true;
  if (r.bound_anomaly)
    r.diagnostic = "bound anomaly: bound " + std::to_string(last.bound) + " outside the wrong side of " +
                   std::to_string(last.estimate) + " +- " + std::to_string(half);
  return r;
}

struct SddpContext {
  const InflowModel& inflow;
  const ScenarioSet& scenarios;
};

struct StageRun {
  int stage = 0;
  int scenario = 0;
  StageState state;
  StageProblem problem;  // including future variables
  std::vector<FutureLink> links;
  CutSolve result;
  double future_weight = 0.0;
  double immediate = 0.0;
};

struct SddpResult {
  FutureValueFunction fvf;
  std::vector<IterationRecord> history;
  ConvergenceReport report;
  double seconds = 0.0;
};

class StageFailure : public std::runtime_error {
 public:
  StageFailure(const std::string& what, int stage, int scenario)
      : std::runtime_error(what + " (stage " + std::to_string(stage) + ", scenario " + std::to_string(scenario) + ")"),
        stage_(stage),
        scenario_(scenario) {}
  int stage() const { return stage_; }
  int scenario() const { return scenario_; }

 private:
  int stage_, scenario_;
};

namespace detail {

inline constexpr std::uint64_t kTreeTag = 0x54524545ull;  // "TREE"

// Window of stage t+1 implied by the linear AR map, for residual vector xi.
inline Window next_window(const InflowModel& model, const std::vector<int>& hydros, int t_next, const Window& w,
                          const std::vector<double>& xi, bool clamp) {
  Window nw(w.size());
  for (std::size_t h = 0; h < w.size(); ++h) {
    const auto& c = model.hydros[hydros[h]].coefficients(t_next);
    double a = xi[h];
    for (std::size_t p = 0; p < c.size(); ++p) a += c[p] * w[h][p];
    if (clamp) a = std::max(0.0, a);
    nw[h].resize(w[h].size());
    nw[h][0] = a;
    for (std::size_t j = 1; j < w[h].size(); ++j) nw[h][j] = w[h][j - 1];
  }
  return nw;
}

}  // namespace detail

template <StagePolicy P>
class SddpEngine {
 public:
  SddpEngine(const P& policy, SddpContext ctx, SddpOptions opt)
      : policy_(policy), ctx_(ctx), opt_(opt), hydros_(policy.hydros()), T_(policy.stages()) {
    W_ = ctx.inflow.window();
    for (int h : hydros_)
      if (h < 0 || h >= static_cast<int>(ctx.inflow.hydros.size()))
        throw std::invalid_argument("policy hydro index outside the inflow model");
    if (ctx.scenarios.stages < T_) throw std::invalid_argument("scenario set shorter than the horizon");
  }

  int window() const { return W_; }
  int scenarios() const { return ctx_.scenarios.scenarios; }

  StageState initial_state(int s) const {
    StageState st;
    st.storage = policy_.initial_storage();
    for (int h : hydros_) st.window.push_back(initial_window(ctx_.inflow, ctx_.scenarios, h, s, W_));
    return st;
  }

  /// Builds the stage LP with one future variable per opening and solves it.
  StageRun solve_stage(int t, int s, const StageState& state, const FutureValueFunction& fvf) const {
    StageRun run;
    run.stage = t;
    run.scenario = s;
    run.state = state;
    run.problem = policy_.build(t, s, state);
    if (run.problem.storage_out.size() != hydros_.size() || run.problem.hydro_balance.size() != hydros_.size())
      throw StageFailure("policy returned mismatched hydro dimensions", t, s);
    const int L = ctx_.scenarios.openings;
    if (t + 1 < T_) {
      run.future_weight = 1.0 / L;
      std::vector<double> xi(hydros_.size());
      for (int l = 0; l < L; ++l) {
        for (std::size_t h = 0; h < hydros_.size(); ++h) xi[h] = ctx_.scenarios.opening(t + 1, hydros_[h], l);
        FutureLink link;
        link.var = run.problem.lp.add_variable((fvf.sense() == ValueSense::Cost ? "alpha[" : "beta[") +
                                                   std::to_string(l) + "]",
                                               0.0, 0.0, run.future_weight);
        link.label = policy_.opening_label(t, s, l);
        link.storage_vars = run.problem.storage_out;
        link.next_window = detail::next_window(ctx_.inflow, hydros_, t + 1, state.window, xi, false);
        link.guess = state.storage;
        run.links.push_back(std::move(link));
      }
    }
    run.result = solve_with_cuts(run.problem.lp, run.links, fvf, t + 1, opt_.all_cuts_below);
    if (!run.result.sol.optimal())
      throw StageFailure(std::string("stage subproblem ") + to_string(run.result.sol.status), t, s);
    double future = 0.0;
    for (const auto& link : run.links) future += run.future_weight * run.result.sol.primal[link.var];
    run.immediate = run.result.sol.objective - future;
    return run;
  }

  /// Cut on the stage-t value function, tight at the solved state.
  Cut make_cut(const StageRun& run, const FutureValueFunction& fvf) const {
    const int t = run.stage;
    const auto& sol = run.result.sol;
    const std::size_t H = hydros_.size();
    Cut c;
    c.stage = t;
    c.cluster = policy_.cluster(t, run.scenario);
    c.storage_coeffs.assign(H, 0.0);
    c.inflow_coeffs.assign(H, std::vector<double>(W_, 0.0));
    for (std::size_t h = 0; h < H; ++h) {
      const double pi = sol.dual[run.problem.hydro_balance[h]];
      c.storage_coeffs[h] = pi;
      c.inflow_coeffs[h][0] = pi;
    }
    // Chain rule through the AR map inside each opening's next window.
    for (const auto& ac : run.result.rows) {
      const double mu = sol.dual[ac.row];
      if (mu == 0.0) continue;
      const auto& link = run.links[ac.link];
      const Cut& nc = fvf.cuts(t + 1, link.label)[ac.cut];
      for (std::size_t h = 0; h < H; ++h) {
        const auto& phi = ctx_.inflow.hydros[hydros_[h]].coefficients(t + 1);
        for (int p = 0; p < W_; ++p) {
          double d = 0.0;
          if (p < static_cast<int>(phi.size())) d += nc.inflow_coeffs[h][0] * phi[p];
          if (p + 1 < W_) d += nc.inflow_coeffs[h][p + 1];
          c.inflow_coeffs[h][p] += mu * d;
        }
      }
    }
    double lin = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      lin += c.storage_coeffs[h] * run.state.storage[h];
      for (int j = 0; j < W_; ++j) lin += c.inflow_coeffs[h][j] * run.state.window[h][j];
    }
    c.intercept = sol.objective - lin;
    return c;
  }

  StageState next_state(const StageRun& run, int iteration) const {
    const int t = run.stage;
    StageState nx;
    const std::size_t H = hydros_.size();
    nx.storage.resize(H);
    for (std::size_t h = 0; h < H; ++h) nx.storage[h] = run.result.sol.primal[run.problem.storage_out[h]];
    if (opt_.tree_mode) {
      Rng rng(opt_.seed, stream_id(detail::kTreeTag, {iteration, run.scenario, t}));
      const int l = rng.uniform_int(ctx_.scenarios.openings);
      std::vector<double> xi(H);
      for (std::size_t h = 0; h < H; ++h) xi[h] = ctx_.scenarios.opening(t + 1, hydros_[h], l);
      nx.window = detail::next_window(ctx_.inflow, hydros_, t + 1, run.state.window, xi, true);
    } else {
      nx.window = run.state.window;
      for (std::size_t h = 0; h < H; ++h) {
        for (int j = W_ - 1; j > 0; --j) nx.window[h][j] = nx.window[h][j - 1];
        nx.window[h][0] = ctx_.scenarios.inflow(t + 1, hydros_[h], run.scenario);
      }
    }
    return nx;
  }

  /// Chronological simulation of every scenario; `visit(run)` sees each stage.
  template <class Visit>
  void simulate(const FutureValueFunction& fvf, int iteration, Visit&& visit) const {
    const int S = scenarios();
    parallel_for(S, opt_.workers, [&](int s) {
      StageState st = initial_state(s);
      for (int t = 0; t < T_; ++t) {
        StageRun run = solve_stage(t, s, st, fvf);
        if (t + 1 < T_) st = next_state(run, iteration);
        visit(run);
      }
    });
  }

  SddpResult run() const {
    const auto t0 = std::chrono::steady_clock::now();
    SddpResult res;
    res.fvf = FutureValueFunction(policy_.sense(), T_);
    const int S = scenarios();
    for (int it = 1; it <= opt_.max_iterations; ++it) {
      // Forward pass.
      std::vector<std::vector<StageState>> states(S, std::vector<StageState>(T_));
      std::vector<double> totals(S, 0.0);
      simulate(res.fvf, it, [&](const StageRun& run) {
        states[run.scenario][run.stage] = run.state;
        totals[run.scenario] += run.immediate;  // each scenario is visited by one worker
      });
      // Backward pass.
      for (int t = T_ - 1; t >= 1; --t) {
        std::vector<Cut> fresh(S);
        parallel_for(S, opt_.workers, [&](int s) {
          const StageRun run = solve_stage(t, s, states[s][t], res.fvf);
          fresh[s] = make_cut(run, res.fvf);
        });
        for (auto& c : fresh) res.fvf.add(std::move(c));
      }
      // Bound from the first stage.
      std::vector<double> first(S, 0.0);
      parallel_for(S, opt_.workers, [&](int s) { first[s] = solve_stage(0, s, initial_state(s), res.fvf).result.sol.objective; });
      IterationRecord rec;
      rec.iteration = it;
      double mean = 0.0, bound = 0.0;
      for (int s = 0; s < S; ++s) {
        mean += totals[s];
        bound += first[s];
      }
      mean /= S;
      bound /= S;
      double var = 0.0;
      for (int s = 0; s < S; ++s) var += (totals[s] - mean) * (totals[s] - mean);
      rec.estimate = mean;
      rec.bound = bound;
      rec.std_error = S > 1 ? std::sqrt(var / (S - 1) / S) : 0.0;
      rec.cuts = res.fvf.size();
      res.history.push_back(rec);
      res.report = check_convergence(res.history, policy_.sense(), opt_.min_iterations, opt_.z);
      if (res.report.converged) break;
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (opt_.time_limit_s > 0.0 && el > opt_.time_limit_s) break;
    }
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

 private:
  const P& policy_;
  SddpContext ctx_;
  SddpOptions opt_;
  std::vector<int> hydros_;
  int T_;
  int W_ = 1;
};

template <StagePolicy P>
SddpResult run_sddp(const P& policy, SddpContext ctx, const SddpOptions& opt = {}) {
  return SddpEngine<P>(policy, ctx, opt).run();
}

// ---------------------------------------------------------------------------
// Grid-based stochastic dynamic programming (test oracle).

struct SdpGrid {
  std::vector<std::vector<double>> storage;              // [hydro] ascending grid
  std::vector<std::vector<std::vector<double>>> inflow;  // [t][hydro] ascending grid of the stage inflow
};

struct SdpResult {
  ValueSense sense = ValueSense::Cost;
  SdpGrid grid;
  std::vector<std::vector<double>> values;  // [t][storage-major flat index]
  long solves = 0;
};

namespace detail {

// Multilinear weights of x on an ascending grid (clamped to its range).
inline void bracket(const std::vector<double>& g, double x, int& lo, double& frac) {
  if (g.size() == 1 || x <= g.front()) {
    lo = 0;
    frac = 0.0;
    return;
  }
  if (x >= g.back()) {
    lo = static_cast<int>(g.size()) - 2;
    frac = 1.0;
    return;
  }
  lo = static_cast<int>(std::upper_bound(g.begin(), g.end(), x) - g.begin()) - 1;
  frac = (x - g[lo]) / (g[lo + 1] - g[lo]);
}

inline std::vector<int> unflatten(long idx, const std::vector<int>& dims) {
  std::vector<int> out(dims.size());
  for (int d = static_cast<int>(dims.size()) - 1; d >= 0; --d) {
    out[d] = static_cast<int>(idx % dims[d]);
    idx /= dims[d];
  }
  return out;
}

inline long flatten(const std::vector<int>& at, const std::vector<int>& dims) {
  long idx = 0;
  for (std::size_t d = 0; d < dims.size(); ++d) idx = idx * dims[d] + at[d];
  return idx;
}

}  // namespace detail

/// Value of stage t+1's table at storage node `vnode` (per-hydro indices) and
/// inflow vector a, interpolated multilinearly in the inflow dimensions.
inline double sdp_table_value(const SdpResult& r, int t, const std::vector<int>& vnode, const std::vector<double>& a) {
  const std::size_t H = vnode.size();
  std::vector<int> dims;
  for (std::size_t h = 0; h < H; ++h) dims.push_back(static_cast<int>(r.grid.storage[h].size()));
  for (std::size_t h = 0; h < H; ++h) dims.push_back(static_cast<int>(r.grid.inflow[t][h].size()));
  std::vector<int> lo(H);
  std::vector<double> fr(H);
  for (std::size_t h = 0; h < H; ++h) detail::bracket(r.grid.inflow[t][h], a[h], lo[h], fr[h]);
  double v = 0.0;
  for (int corner = 0; corner < (1 << H); ++corner) {
    std::vector<int> at(vnode.begin(), vnode.end());
    double w = 1.0;
    for (std::size_t h = 0; h < H; ++h) {
      const bool up = (corner >> h) & 1;
      const int n = static_cast<int>(r.grid.inflow[t][h].size());
      at.push_back(std::min(lo[h] + (up ? 1 : 0), n - 1));
      w *= up ? fr[h] : 1.0 - fr[h];
    }
    if (w == 0.0) continue;
    v += w * r.values[t][detail::flatten(at, dims)];
  }
  return v;
}

/// Stage-t value at an arbitrary state (window of length 1) given tables for t+1.
template <StagePolicy P>
double sdp_stage_value(const P& policy, SddpContext ctx, const SdpResult& r, int t, int s, const StageState& st) {
  const auto hydros = policy.hydros();
  const std::size_t H = hydros.size();
  StageProblem pb = policy.build(t, s, st);
  if (t + 1 < policy.stages()) {
    std::vector<int> sdims;
    long nodes = 1;
    for (std::size_t h = 0; h < H; ++h) {
      sdims.push_back(static_cast<int>(r.grid.storage[h].size()));
      nodes *= sdims.back();
    }
    const int L = ctx.scenarios.openings;
    std::vector<Term> convex;
    std::vector<std::vector<Term>> link(H);
    for (long k = 0; k < nodes; ++k) {
      const auto node = detail::unflatten(k, sdims);
      double c = 0.0;
      for (int l = 0; l < L; ++l) {
        std::vector<double> a(H);
        for (std::size_t h = 0; h < H; ++h) {
          const auto& phi = ctx.inflow.hydros[hydros[h]].coefficients(t + 1);
          a[h] = ctx.scenarios.opening(t + 1, hydros[h], l) + (phi.empty() ? 0.0 : phi[0] * st.window[h][0]);
        }
        c += sdp_table_value(r, t + 1, node, a) / L;
      }
      const int lam = pb.lp.add_variable("lambda", 0.0, 1.0, c);
      convex.push_back({lam, 1.0});
      for (std::size_t h = 0; h < H; ++h) link[h].push_back({lam, r.grid.storage[h][node[h]]});
    }
    pb.lp.add_constraint("convexity", convex, Relation::Equal, 1.0);
    for (std::size_t h = 0; h < H; ++h) {
      link[h].push_back({pb.storage_out[h], -1.0});
      pb.lp.add_constraint("interp[" + std::to_string(h) + "]", link[h], Relation::Equal, 0.0);
    }
  }
  const auto sol = solve(pb.lp);
  if (!sol.optimal()) throw StageFailure(std::string("SDP stage LP ") + to_string(sol.status), t, s);
  return sol.objective;
}

/// Backward value iteration over (storage x inflow) grids, evaluated with
/// scenario `s`'s stage data. Requires a lag window of one.
template <StagePolicy P>
SdpResult run_sdp_reference(const P& policy, SddpContext ctx, const SdpGrid& grid, int s = 0, long max_solves = 100000) {
  if (ctx.inflow.window() != 1) throw std::invalid_argument("SDP reference supports AR order <= 1 only");
  const auto hydros = policy.hydros();
  const std::size_t H = hydros.size();
  const int T = policy.stages();
  if (grid.storage.size() != H || static_cast<int>(grid.inflow.size()) < T)
    throw std::invalid_argument("SDP grid dimensions do not match the policy");
  std::vector<std::vector<int>> dims(T);
  long total = 0;
  for (int t = 0; t < T; ++t) {
    long n = 1;
    for (std::size_t h = 0; h < H; ++h) {
      dims[t].push_back(static_cast<int>(grid.storage[h].size()));
      n *= dims[t].back();
    }
    for (std::size_t h = 0; h < H; ++h) {
      dims[t].push_back(static_cast<int>(grid.inflow[t][h].size()));
      n *= dims[t].back();
    }
    total += n;
  }
  if (total > max_solves)
    throw std::invalid_argument("SDP grid too large: " + std::to_string(total) + " solves exceed " +
                                std::to_string(max_solves));
  SdpResult r;
  r.sense = policy.sense();
  r.grid = grid;
  r.values.resize(T);
  for (int t = T - 1; t >= 0; --t) {
    long n = 1;
    for (int d : dims[t]) n *= d;
    r.values[t].assign(n, 0.0);
    for (long k = 0; k < n; ++k) {
      const auto at = detail::unflatten(k, dims[t]);
      StageState st;
      for (std::size_t h = 0; h < H; ++h) {
        st.storage.push_back(grid.storage[h][at[h]]);
        st.window.push_back({grid.inflow[t][h][at[H + h]]});
      }
      r.values[t][k] = sdp_stage_value(policy, ctx, r, t, s, st);
      ++r.solves;
    }
  }
  return r;
}

}  // namespace hydromarket
