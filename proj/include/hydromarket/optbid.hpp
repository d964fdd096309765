#pragma once

// Box-allocation bidding: given a ladder of bid prices per block ("boxes") and
// the spot scenarios of the current Markov cluster, choose the quantity put
// in each box so that the average over spot scenarios of the accepted revenue
// minus cost plus future benefit is maximal. Quantities are shared across spot
// scenarios; the physical recourse (generation, turbining, storage) is not.

#include <hydromarket/market.hpp>
#include <hydromarket/markov.hpp>
#include <hydromarket/policy.hpp>
#include <hydromarket/sddp.hpp>

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace hydromarket {

struct PriceGrid {
  std::vector<std::vector<double>> prices;  // [b][n], strictly increasing

  int blocks() const { return static_cast<int>(prices.size()); }
  int boxes(int b) const { return static_cast<int>(prices[b].size()); }

  void validate() const {
    for (const auto& row : prices) {
      if (row.empty()) throw std::invalid_argument("price grid: empty block");
      for (std::size_t n = 0; n < row.size(); ++n) {
        if (!(row[n] >= 0.0)) throw std::invalid_argument("price grid: prices must be >= 0");
        if (n > 0 && !(row[n] > row[n - 1])) throw std::invalid_argument("price grid: prices must increase");
      }
    }
  }
};

enum class Settlement { AsBid, AtSpot };

using AcceptanceMatrix = std::vector<std::vector<std::vector<int>>>;  // [k][b][n]

/// phi[k][b][n] = 1 iff the box price does not exceed spot scenario k's price.
inline AcceptanceMatrix acceptance(const PriceGrid& grid, const std::vector<PriceVector>& spots) {
  AcceptanceMatrix a(spots.size());
  for (std::size_t k = 0; k < spots.size(); ++k) {
    a[k].resize(grid.blocks());
    for (int b = 0; b < grid.blocks(); ++b)
      for (double p : grid.prices[b]) a[k][b].push_back(p <= spots[k].at(b) ? 1 : 0);
  }
  return a;
}

/// Default ladder per block: 0, nearest-rank quantiles of the cluster's spots
/// (so box prices are realized spot levels), then levels spaced
/// geometrically from the top spot up to the deficit cost, `boxes` in all.
/// The upper levels give capacity that is out of the money at every cluster
/// spot a price to offer at short of the deficit cost.
inline PriceGrid default_price_grid(const std::vector<PriceVector>& cluster_spots, double deficit_cost,
                                    int quantiles = 6, int boxes = 10) {
  if (cluster_spots.empty()) throw std::invalid_argument("price grid: empty cluster");
  PriceGrid g;
  const std::size_t B = cluster_spots.front().size();
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> v;
    for (const auto& p : cluster_spots) v.push_back(p.at(b));
    std::sort(v.begin(), v.end());
    std::set<double> levels{0.0};
    const int n = static_cast<int>(v.size());
    for (int q = 1; q <= quantiles; ++q) {
      const int rank = std::max(1, static_cast<int>(std::ceil(static_cast<double>(q) * n / quantiles)));
      levels.insert(std::clamp(v[rank - 1], 0.0, deficit_cost));
    }
    const double top = *levels.rbegin();
    const int missing = std::max(1, boxes - static_cast<int>(levels.size()));
    for (int i = 1; i < missing; ++i) {
      const double x = static_cast<double>(i) / missing;
      levels.insert(top > 0.0 ? top * std::pow(deficit_cost / top, x) : x * deficit_cost);
    }
    levels.insert(deficit_cost);
    g.prices.emplace_back(levels.begin(), levels.end());
  }
  return g;
}

using GridTable = std::vector<std::vector<PriceGrid>>;  // [t][cluster]

/// Default ladders of every (stage, cluster), from all of the cluster's spots.
inline GridTable cluster_price_grids(const MarkovChain& chain, const std::vector<std::vector<PriceVector>>& spots,
                                     double deficit_cost, int quantiles = 6, int boxes = 10) {
  GridTable out(chain.num_stages());
  for (int t = 0; t < chain.num_stages(); ++t)
    for (int k = 0; k < chain.clusters(t); ++k) {
      std::vector<PriceVector> sp;
      for (int s : chain.members(t, k)) sp.push_back(spots.at(t).at(s));
      out[t].push_back(default_price_grid(sp, deficit_cost, quantiles, boxes));
    }
  return out;
}

struct OptBidOptions {
  Settlement settlement = Settlement::AsBid;
  // Per-MWh preference for cheaper boxes among equally valued allocations;
  // capacity that would lose money goes to the cheapest box no spot accepts. Excluded from reported objectives.
  double tie_break = 1e-5;
  int max_spot_scenarios = 0;  // 0 = the whole cluster
  int quantiles = 6;
  int boxes = 10;
  int all_cuts_below = 10;
  std::optional<PriceGrid> grid;  // one ladder for every stage and scenario
  GridTable grid_table;           // else per (stage, cluster) ladders; else the cluster default
};

struct OptBidProblem {
  LinearProgram lp;
  PriceGrid grid;
  std::vector<int> spot_scenarios;         // K(s)
  AcceptanceMatrix phi;                    // [k][b][n]
  std::vector<std::vector<int>> q;         // [b][n], MWh
  std::vector<AgentStage> copies;          // one per spot scenario
  std::vector<FutureLink> links;           // [k * L + l]
  std::vector<std::vector<double>> bonus;  // [b][n] tie-break per MWh, excluded from the reported objective
};

struct OptBidOutcome {
  std::vector<Bid> bids;  // one per block
  double objective = 0.0;  // without the tie-break term
  OptBidProblem problem;
  CutSolve result;
};

/// Tie-break among equally valued allocations. As-bid: cheaper boxes first.
/// At-spot: among boxes some spot accepts, the dearest (every such box earns
/// the same spot, so this bids as high as acceptance allows); otherwise the
/// cheapest box nothing accepts, so out-of-the-money capacity is still offered.
inline double tie_break_bonus(const OptBidOptions& opt, const AcceptanceMatrix& phi, int b, int n, int N) {
  if (opt.settlement == Settlement::AsBid) return opt.tie_break * (N - n) / N;
  bool accepted = false;
  for (const auto& k : phi) accepted = accepted || k[b][n];
  return accepted ? opt.tie_break * (1.0 + static_cast<double>(n + 1) / N) : opt.tie_break * (N - n) / N;
}

/// Spot scenarios of s's cluster at stage t, optionally thinned (always keeping s).
inline std::vector<int> cluster_scenarios(const MarkovChain& chain, int t, int s, int max_count) {
  auto m = chain.members(t, chain.cluster_of(t, s));
  if (max_count <= 0 || static_cast<int>(m.size()) <= max_count) return m;
  std::vector<int> out{s};
  const double step = static_cast<double>(m.size()) / max_count;
  for (int i = 0; static_cast<int>(out.size()) < max_count && i < static_cast<int>(m.size()); ++i) {
    const int pick = m[static_cast<std::size_t>(i * step) % m.size()];
    if (std::find(out.begin(), out.end(), pick) == out.end()) out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline OptBidProblem build_optbid_lp(const AgentPolicyBase& agent, const SddpContext& ctx, int t, int s,
                                     const StageState& st, const SpotScenarios& spots, const OptBidOptions& opt = {}) {
  const auto& sys = agent.system();
  const auto& chain = agent.chain();
  OptBidProblem pb;
  pb.spot_scenarios = cluster_scenarios(chain, t, s, opt.max_spot_scenarios);
  if (pb.spot_scenarios.empty()) throw std::invalid_argument("OptBid: empty spot cluster");
  std::vector<PriceVector> sp;
  for (int k : pb.spot_scenarios) sp.push_back(spots.at(t).at(k));
  if (opt.grid) pb.grid = *opt.grid;
  else if (!opt.grid_table.empty()) pb.grid = opt.grid_table.at(t).at(chain.cluster_of(t, s));
  else pb.grid = default_price_grid(sp, sys.deficit_cost(), opt.quantiles, opt.boxes);
  pb.grid.validate();
  const int B = sys.horizon.blocks();
  if (pb.grid.blocks() != B) throw std::invalid_argument("OptBid: price grid has the wrong number of blocks");
  pb.phi = acceptance(pb.grid, sp);

  auto& lp = pb.lp;
  lp.set_sense(Sense::Maximize);
  const double K = static_cast<double>(pb.spot_scenarios.size());
  pb.bonus.resize(B);
  pb.q.resize(B);
  for (int b = 0; b < B; ++b) {
    const int N = pb.grid.boxes(b);
    std::vector<Term> cap;
    for (int n = 0; n < N; ++n) {
      pb.bonus[b].push_back(tie_break_bonus(opt, pb.phi, b, n, N));
      double c = pb.bonus[b][n];
      if (opt.settlement == Settlement::AsBid)
        for (std::size_t k = 0; k < sp.size(); ++k) c += pb.phi[k][b][n] * pb.grid.prices[b][n] / K;
      else
        for (std::size_t k = 0; k < sp.size(); ++k) c += pb.phi[k][b][n] * sp[k][b] / K;
      pb.q[b].push_back(lp.add_variable(detail::idx("q", b, n), 0.0, kInf, c));
      cap.push_back({pb.q[b].back(), 1.0});
    }
    lp.add_constraint(detail::idx("capacity", b), cap, Relation::LessEqual, agent.max_delivery(t, b, s));
  }

  const int L = ctx.scenarios.openings;
  const auto hydros = agent.hydros();
  std::vector<Window> next_windows;
  if (t + 1 < sys.horizon.stages) {
    std::vector<double> xi(hydros.size());
    for (int l = 0; l < L; ++l) {
      for (std::size_t h = 0; h < hydros.size(); ++h) xi[h] = ctx.scenarios.opening(t + 1, hydros[h], l);
      next_windows.push_back(detail::next_window(ctx.inflow, hydros, t + 1, st.window, xi, false));
    }
  }
  for (std::size_t kk = 0; kk < pb.spot_scenarios.size(); ++kk) {
    const std::string tag = "@" + std::to_string(pb.spot_scenarios[kk]);
    auto copy = agent.add_physics(lp, t, s, st, tag);
    // Revenue sits on q; the copy only pays its thermal cost, averaged over k.
    for (int v : copy.thermal) lp.set_cost(v, lp.variable(v).cost / K);
    for (int b = 0; b < B; ++b) {
      std::vector<Term> row{{copy.delta[b], 1.0}};
      for (int n = 0; n < pb.grid.boxes(b); ++n)
        if (pb.phi[kk][b][n]) row.push_back({pb.q[b][n], -1.0});
      lp.add_constraint(detail::idx(("accepted" + tag).c_str(), b), row, Relation::Equal, 0.0);
    }
    for (int l = 0; l < static_cast<int>(next_windows.size()); ++l) {
      FutureLink link;
      link.var = lp.add_variable(detail::idx(("beta" + tag).c_str(), l), 0.0, 0.0, 1.0 / (K * L));
      link.label = agent.opening_label(t, s, l);
      link.storage_vars = copy.problem.storage_out;
      link.next_window = next_windows[l];
      link.guess = st.storage;
      pb.links.push_back(std::move(link));
    }
    pb.copies.push_back(std::move(copy));
  }
  return pb;
}

/// Bid segments (price, MW) of every nonzero box, one Bid per block.
inline std::vector<Bid> extract_bid(const OptBidProblem& pb, const LpSolution& sol, const SystemModel& sys, int agent,
                                    int t, int s) {
  if (!sol.optimal()) throw std::runtime_error("extract_bid: OptBid LP not optimal");
  std::vector<Bid> out;
  for (int b = 0; b < pb.grid.blocks(); ++b) {
    Bid bid{agent, t, s, b, {}};
    const double hrs = sys.horizon.block_hours(b);
    for (int n = 0; n < pb.grid.boxes(b); ++n) {
      const double q = sol.primal[pb.q[b][n]] / hrs;
      if (q > 1e-9) bid.segments.push_back({pb.grid.prices[b][n], q});
    }
    out.push_back(std::move(bid));
  }
  return out;
}

inline OptBidOutcome solve_optbid(const AgentPolicyBase& agent, const SddpContext& ctx, int t, int s,
                                  const StageState& st, const SpotScenarios& spots, const FutureValueFunction& fbf,
                                  const OptBidOptions& opt = {}) {
  OptBidOutcome out;
  out.problem = build_optbid_lp(agent, ctx, t, s, st, spots, opt);
  out.result = solve_with_cuts(out.problem.lp, out.problem.links, fbf, t + 1, opt.all_cuts_below);
  if (!out.result.sol.optimal())
    throw StageFailure(std::string("OptBid LP ") + to_string(out.result.sol.status), t, s);
  out.bids = extract_bid(out.problem, out.result.sol, agent.system(), agent.view().agent, t, s);
  double bonus = 0.0;
  for (int b = 0; b < out.problem.grid.blocks(); ++b) {
    const int N = out.problem.grid.boxes(b);
    for (int n = 0; n < N; ++n) bonus += out.problem.bonus[b][n] * out.result.sol.primal[out.problem.q[b][n]];
  }
  out.objective = out.result.sol.objective - bonus;
  return out;
}

// Chronological bid simulation -------------------------------------------------

struct AgentBids {
  int stages = 0, scenarios = 0, blocks = 0;
  std::vector<Bid> bids;  // [t][s][b]
  const Bid& at(int t, int s, int b) const { return bids[(static_cast<std::size_t>(t) * scenarios + s) * blocks + b]; }
  Bid& at(int t, int s, int b) { return bids[(static_cast<std::size_t>(t) * scenarios + s) * blocks + b]; }
};

/// Bids of one agent for every (stage, scenario, block). Each scenario follows
/// its own inflows; the storage handed to the next stage is that of the copy
/// facing the scenario's own spot.
inline AgentBids simulate_bids(const AgentPolicyBase& agent, const SddpContext& ctx, const SpotScenarios& spots,
                               const FutureValueFunction& fbf, const OptBidOptions& opt = {}, int workers = 1) {
  const auto& sys = agent.system();
  AgentBids out;
  out.stages = sys.horizon.stages;
  out.scenarios = ctx.scenarios.scenarios;
  out.blocks = sys.horizon.blocks();
  out.bids.resize(static_cast<std::size_t>(out.stages) * out.scenarios * out.blocks);
  const auto hydros = agent.hydros();
  const int W = ctx.inflow.window();
  parallel_for(out.scenarios, workers, [&](int s) {
    StageState st;
    st.storage = agent.initial_storage();
    for (int h : hydros) st.window.push_back(initial_window(ctx.inflow, ctx.scenarios, h, s, W));
    for (int t = 0; t < out.stages; ++t) {
      const auto r = solve_optbid(agent, ctx, t, s, st, spots, fbf, opt);
      for (int b = 0; b < out.blocks; ++b) out.at(t, s, b) = r.bids[b];
      if (t + 1 == out.stages) break;
      const auto& ks = r.problem.spot_scenarios;
      const std::size_t own = static_cast<std::size_t>(std::find(ks.begin(), ks.end(), s) - ks.begin());
      const auto& copy = r.problem.copies.at(own);
      for (std::size_t h = 0; h < hydros.size(); ++h) {
        st.storage[h] = r.result.sol.primal[copy.problem.storage_out[h]];
        for (int j = W - 1; j > 0; --j) st.window[h][j] = st.window[h][j - 1];
        st.window[h][0] = ctx.scenarios.inflow(t + 1, hydros[h], s);
      }
    }
  });
  return out;
}

}  // namespace hydromarket
