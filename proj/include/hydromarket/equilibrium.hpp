#pragma once

// Market equilibrium by best-response iteration. Initialization: centralized
// dispatch -> spot Markov chain and bid ladders -> MaxRev for every agent ->
// OptBid -> clearing.
// Then, round-robin over agents: price makers face the concave hull of their
// residual-demand revenue (NashBid), price takers the current spots (MaxRev);
// OptBid turns the resulting benefit functions into bids and the market is
// re-cleared. The loop stops when a full round changes neither bids nor spots.

#include <hydromarket/dispatch.hpp>
#include <hydromarket/market.hpp>
#include <hydromarket/markov.hpp>
#include <hydromarket/optbid.hpp>
#include <hydromarket/parallel.hpp>
#include <hydromarket/policy.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace hydromarket {

inline OptBidOptions at_spot() {
  OptBidOptions o;
  o.settlement = Settlement::AtSpot;
  return o;
}

// The market clears at a uniform spot, so bids inside the loop are valued at
// that spot; paying the bid price would let price takers ratchet bids upward.
struct EquilibriumOptions {
  SddpOptions sddp;       // centralized dispatch and agent recursions
  OptBidOptions optbid = at_spot();
  int clusters = 3;       // K of the spot Markov chain
  int max_rounds = 10;
  double tol_bid = -1.0;  // MW; negative = 1e-3 of peak demand
  double tol_spot = 1e-2;
  int stages_per_year = 12;
  int recluster_every = 0;  // rebuild the chain every R rounds (0 = never)
  std::vector<int> order;   // agent update order; empty = ascending index
  std::uint64_t seed = 0;
  int workers = 1;
};

struct ClearedMarket {
  int stages = 0, scenarios = 0, blocks = 0;
  std::vector<double> spot;                   // [t][s][b]
  std::vector<std::vector<double>> accepted;  // [agent][t][s][b] MW
  std::vector<std::vector<std::vector<double>>> segments;  // [agent][t][s][b] -> accepted MW per bid segment

  std::size_t tsb(int t, int s, int b) const { return (static_cast<std::size_t>(t) * scenarios + s) * blocks + b; }
  double spot_at(int t, int s, int b) const { return spot[tsb(t, s, b)]; }
  SpotScenarios spot_scenarios() const {
    SpotScenarios out(stages, std::vector<PriceVector>(scenarios, PriceVector(blocks)));
    for (int t = 0; t < stages; ++t)
      for (int s = 0; s < scenarios; ++s)
        for (int b = 0; b < blocks; ++b) out[t][s][b] = spot_at(t, s, b);
    return out;
  }
};

/// Clears every (stage, scenario, block) against gross demand.
inline ClearedMarket clear_all(const SystemModel& sys, const std::vector<AgentBids>& bids, int workers = 1) {
  ClearedMarket m;
  m.stages = sys.horizon.stages;
  m.blocks = sys.horizon.blocks();
  m.scenarios = bids.empty() ? sys.horizon.scenarios : bids.front().scenarios;
  const std::size_t n = static_cast<std::size_t>(m.stages) * m.scenarios * m.blocks;
  m.spot.assign(n, 0.0);
  m.accepted.assign(bids.size(), std::vector<double>(n, 0.0));
  m.segments.assign(bids.size(), std::vector<std::vector<double>>(n));
  parallel_for(static_cast<int>(n), workers, [&](int idx) {
    const int b = idx % m.blocks;
    const int s = (idx / m.blocks) % m.scenarios;
    const int t = idx / (m.blocks * m.scenarios);
    std::vector<BidSegment> offers;
    for (const auto& ab : bids)
      for (const auto& seg : ab.at(t, s, b).segments) offers.push_back(seg);
    const auto out = clear(offers, sys.horizon.demand[t][b], sys.deficit_cost());
    m.spot[idx] = out.spot;
    std::size_t k = 0;
    for (std::size_t a = 0; a < bids.size(); ++a) {
      auto& seg = m.segments[a][idx];
      for (std::size_t j = 0; j < bids[a].at(t, s, b).segments.size(); ++j, ++k) {
        seg.push_back(out.accepted[k]);
        m.accepted[a][idx] += out.accepted[k];
      }
    }
  });
  return m;
}

/// Largest gap between the cumulative supply curves of two bids.
inline double supply_curve_distance(const Bid& a, const Bid& b) {
  std::vector<double> prices;
  for (const auto& s : a.segments) prices.push_back(s.price);
  for (const auto& s : b.segments) prices.push_back(s.price);
  double worst = 0.0;
  for (double p : prices) {
    double qa = 0.0, qb = 0.0;
    for (const auto& s : a.segments)
      if (s.price <= p) qa += s.quantity;
    for (const auto& s : b.segments)
      if (s.price <= p) qb += s.quantity;
    worst = std::max(worst, std::abs(qa - qb));
  }
  return worst;
}

inline double bid_change(const AgentBids& before, const AgentBids& after) {
  double d = 0.0;
  for (std::size_t i = 0; i < before.bids.size(); ++i)
    d = std::max(d, supply_curve_distance(before.bids[i], after.bids[i]));
  return d;
}

/// Mean spot per stage over scenarios, blocks weighted by duration.
inline std::vector<double> stage_mean_spot(const ClearedMarket& m, const std::vector<double>& weights) {
  std::vector<double> out(m.stages, 0.0);
  for (int t = 0; t < m.stages; ++t) {
    for (int s = 0; s < m.scenarios; ++s)
      for (int b = 0; b < m.blocks; ++b) out[t] += weights[b] * m.spot_at(t, s, b);
    out[t] /= m.scenarios;
  }
  return out;
}

inline std::vector<double> yearly_means(const std::vector<double>& stage_means, int stages_per_year) {
  std::vector<double> out;
  const int per = std::max(1, stages_per_year);
  for (std::size_t t0 = 0; t0 < stage_means.size(); t0 += per) {
    const std::size_t t1 = std::min(stage_means.size(), t0 + per);
    double s = 0.0;
    for (std::size_t t = t0; t < t1; ++t) s += stage_means[t];
    out.push_back(s / static_cast<double>(t1 - t0));
  }
  return out;
}

inline double spot_change(const std::vector<double>& before, const std::vector<double>& after) {
  double d = 0.0;
  for (std::size_t t = 0; t < before.size(); ++t) d = std::max(d, std::abs(before[t] - after[t]));
  return d;
}

struct MarketState {
  std::vector<AgentBids> bids;  // per agent
  ClearedMarket market;
  MarkovChain chain;
  GridTable grids;  // bid ladders, fixed with the chain
  int round = 0;

  OptBidOptions bidding(const OptBidOptions& base) const {
    OptBidOptions o = base;
    if (!o.grid && o.grid_table.empty()) o.grid_table = grids;
    return o;
  }
};

struct RoundRecord {
  int round = 0;
  int agent = -1;  // -1: initialization
  double bid_change = 0.0;
  double spot_change = 0.0;
  std::vector<double> stage_mean_spot;
  std::vector<double> yearly_mean_spot;
  bool failed = false;
  std::string diagnostic;
  double seconds = 0.0;
};

struct EquilibriumReport {
  bool converged = false;
  int rounds = 0;
  double tol_bid = 0.0, tol_spot = 0.0;
  std::vector<RoundRecord> trace;
  DispatchResult centralized;
  MarketState state;
  std::vector<double> ne_revenue;  // per agent, expected over scenarios
  std::vector<double> cd_revenue;  // per agent, CD generation valued at CD spots
};


namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Revenue curves of a price maker: concave hull of the residual-demand
/// revenue left by the other agents' current offers.
inline RevenueCurves residual_revenue_curves(const SystemModel& sys, const MarketState& state, int agent) {
  const AgentView view = agent_partition(sys, agent);
  const int T = sys.horizon.stages, B = sys.horizon.blocks();
  const int S = state.bids.empty() ? sys.horizon.scenarios : state.bids.front().scenarios;
  RevenueCurves curves(T, std::vector<std::vector<RevenueCurve>>(S, std::vector<RevenueCurve>(B)));
  for (int t = 0; t < T; ++t)
    for (int s = 0; s < S; ++s)
      for (int b = 0; b < B; ++b) {
        const double e_max = view.max_generation(sys, t, b, s);
        if (e_max <= 0.0) {
          curves[t][s][b].vertices = {{0.0, 0.0}};
          continue;
        }
        std::vector<BidSegment> others;
        for (std::size_t a = 0; a < state.bids.size(); ++a)
          if (static_cast<int>(a) != agent)
            for (const auto& seg : state.bids[a].at(t, s, b).segments) others.push_back(seg);
        curves[t][s][b] =
            concave_hull(sawtooth_revenue(others, sys.horizon.demand[t][b], e_max, sys.deficit_cost()));
      }
  return curves;
}

/// One agent's best response to the current market: new benefit function, then bids.
inline AgentBids best_response(const SystemModel& sys, const ScenarioSet& sc, const MarketState& state, int agent,
                               const EquilibriumOptions& opt) {
  const SddpContext ctx{sys.inflow, sc};
  const auto spots = state.market.spot_scenarios();
  if (sys.agents[agent].kind == AgentKind::PriceMaker) {
    NashBidPolicy policy(sys, agent, state.chain, residual_revenue_curves(sys, state, agent));
    const auto pr = run_policy(policy, sys, ctx, opt.sddp);
    return simulate_bids(policy, ctx, spots, pr.fbf, state.bidding(opt.optbid), opt.workers);
  }
  MaxRevPolicy policy(sys, agent, state.chain, spots);
  const auto pr = run_policy(policy, sys, ctx, opt.sddp);
  return simulate_bids(policy, ctx, spots, pr.fbf, state.bidding(opt.optbid), opt.workers);
}

/// Centralized dispatch, spot chain, MaxRev + OptBid for every agent and a first clearing.
inline MarketState initialize_market(const SystemModel& sys, const ScenarioSet& sc, const DispatchResult& cd,
                                     const EquilibriumOptions& opt) {
  MarketState state;
  const auto spots0 = cd.spot_vectors();
  state.chain = build_markov_chain(spots0, sys.horizon.block_weights, opt.clusters, sc.openings, opt.seed);
  state.grids = cluster_price_grids(state.chain, spots0, sys.deficit_cost(), opt.optbid.quantiles, opt.optbid.boxes);
  const SddpContext ctx{sys.inflow, sc};
  for (int a = 0; a < static_cast<int>(sys.agents.size()); ++a) {
    MaxRevPolicy policy(sys, a, state.chain, spots0);
    const auto pr = run_policy(policy, sys, ctx, opt.sddp);
    state.bids.push_back(simulate_bids(policy, ctx, spots0, pr.fbf, state.bidding(opt.optbid), opt.workers));
  }
  state.market = clear_all(sys, state.bids, opt.workers);
  return state;
}

/// Expected revenue per agent: sum over stages and blocks of accepted * spot * hours, averaged over scenarios.
inline std::vector<std::vector<double>> ne_stage_revenue(const SystemModel& sys, const ClearedMarket& m) {
  std::vector<std::vector<double>> out(m.accepted.size(), std::vector<double>(m.stages, 0.0));
  for (std::size_t a = 0; a < m.accepted.size(); ++a)
    for (int t = 0; t < m.stages; ++t) {
      for (int s = 0; s < m.scenarios; ++s)
        for (int b = 0; b < m.blocks; ++b)
          out[a][t] += m.accepted[a][m.tsb(t, s, b)] * m.spot_at(t, s, b) * sys.horizon.block_hours(b);
      out[a][t] /= m.scenarios;
    }
  return out;
}

/// Revenue of each agent's plants in the centralized dispatch, valued at its spots.
inline std::vector<std::vector<double>> cd_stage_revenue(const SystemModel& sys, const DispatchResult& cd) {
  std::vector<std::vector<double>> out(sys.agents.size(), std::vector<double>(cd.stages, 0.0));
  for (std::size_t a = 0; a < sys.agents.size(); ++a) {
    const auto v = agent_partition(sys, static_cast<int>(a));
    for (int t = 0; t < cd.stages; ++t) {
      for (int s = 0; s < cd.scenarios; ++s)
        for (int b = 0; b < cd.blocks; ++b) {
          double mw = 0.0;
          for (int j : v.thermals) mw += cd.thermal_mw[cd.tbs(t, b, s) * cd.thermals + j];
          for (int i : v.hydros) mw += cd.hydro_mw[cd.tbs(t, b, s) * cd.hydros + i];
          for (int r : v.renewables) mw += sys.renewables[r].at(t, b, s);
          out[a][t] += mw * cd.spot_at(t, b, s) * sys.horizon.block_hours(b);
        }
      out[a][t] /= cd.scenarios;
    }
  }
  return out;
}

inline std::vector<double> totals(const std::vector<std::vector<double>>& per_stage) {
  std::vector<double> out;
  for (const auto& v : per_stage) {
    double s = 0.0;
    for (double x : v) s += x;
    out.push_back(s);
  }
  return out;
}

using UpdateCallback = std::function<void(const RoundRecord&)>;

/// Runs the fixed-point iteration; `cd` may be supplied to reuse a centralized run.
inline EquilibriumReport run_equilibrium(const SystemModel& sys, const ScenarioSet& sc,
                                         const EquilibriumOptions& opt = {}, const UpdateCallback& on_update = {},
                                         const DispatchResult* cd = nullptr) {
  EquilibriumReport rep;
  rep.tol_bid = opt.tol_bid >= 0.0 ? opt.tol_bid : 1e-3 * sys.peak_demand();
  rep.tol_spot = opt.tol_spot;
  auto t0 = std::chrono::steady_clock::now();
  if (cd) {
    rep.centralized = *cd;
  } else {
    DispatchOptions dopt;
    dopt.sddp = opt.sddp;
    rep.centralized = run_centralized(sys, sc, dopt);
  }
  auto& state = rep.state;
  state = initialize_market(sys, sc, rep.centralized, opt);
  const auto& w = sys.horizon.block_weights;
  {
    RoundRecord init;
    init.stage_mean_spot = stage_mean_spot(state.market, w);
    init.yearly_mean_spot = yearly_means(init.stage_mean_spot, opt.stages_per_year);
    init.seconds = detail::seconds_since(t0);
    rep.trace.push_back(init);
    if (on_update) on_update(init);
  }
  std::vector<int> order = opt.order;
  if (order.empty())
    for (int a = 0; a < static_cast<int>(sys.agents.size()); ++a) order.push_back(a);
  for (int a : order)
    if (a < 0 || a >= static_cast<int>(sys.agents.size()))
      throw std::invalid_argument("equilibrium: agent order names unknown agent " + std::to_string(a));
  for (int round = 1; round <= opt.max_rounds; ++round) {
    state.round = round;
    if (opt.recluster_every > 0 && round > 1 && (round - 1) % opt.recluster_every == 0) {
      const auto spots = state.market.spot_scenarios();
      state.chain = build_markov_chain(spots, w, opt.clusters, sc.openings, opt.seed);
      state.grids = cluster_price_grids(state.chain, spots, sys.deficit_cost(), opt.optbid.quantiles, opt.optbid.boxes);
    }
    bool stable = true;
    for (int a : order) {
      t0 = std::chrono::steady_clock::now();
      RoundRecord rec;
      rec.round = round;
      rec.agent = a;
      const auto before = stage_mean_spot(state.market, w);
      try {
        auto bids = best_response(sys, sc, state, a, opt);
        rec.bid_change = bid_change(state.bids[a], bids);
        state.bids[a] = std::move(bids);
        state.market = clear_all(sys, state.bids, opt.workers);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.diagnostic = e.what();
      }
      rec.stage_mean_spot = stage_mean_spot(state.market, w);
      rec.yearly_mean_spot = yearly_means(rec.stage_mean_spot, opt.stages_per_year);
      rec.spot_change = spot_change(before, rec.stage_mean_spot);
      rec.seconds = detail::seconds_since(t0);
      if (rec.failed || rec.bid_change > rep.tol_bid || rec.spot_change > rep.tol_spot) stable = false;
      rep.trace.push_back(rec);
      if (on_update) on_update(rec);
    }
    rep.rounds = round;
    if (stable) {
      rep.converged = true;
      break;
    }
  }
  rep.ne_revenue = totals(ne_stage_revenue(sys, state.market));
  rep.cd_revenue = totals(cd_stage_revenue(sys, rep.centralized));
  return rep;
}

// CSV tables ------------------------------------------------------------------

namespace detail {

inline std::ofstream open_csv(const std::string& dir, const std::string& name) {
  std::ofstream f(dir + "/" + name);
  if (!f) throw std::runtime_error("cannot write " + dir + "/" + name);
  f.precision(12);
  return f;
}

}  // namespace detail

/// Yearly mean spot after every agent update, with the same series shifted by
/// one full round (agents x years points) for the fixed-point diagnostic.
inline void write_convergence_csv(const EquilibriumReport& rep, const SystemModel& sys, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(12);
  f << "point,round,agent,year,mean_spot,shifted_mean_spot,bid_change,spot_change,failed\n";
  std::vector<double> series;
  std::size_t years = 0;
  for (const auto& r : rep.trace)
    if (r.round > 0) years = std::max(years, r.yearly_mean_spot.size());
  std::size_t per_round = 0;
  for (const auto& r : rep.trace) per_round += r.round == 1;
  const std::size_t shift = per_round * years;
  std::size_t point = 0;
  for (const auto& r : rep.trace) {
    if (r.round == 0) continue;
    for (std::size_t y = 0; y < r.yearly_mean_spot.size(); ++y, ++point) {
      series.push_back(r.yearly_mean_spot[y]);
      f << point << ',' << r.round << ',' << csv_field(sys.agents[r.agent].id) << ',' << y << ','
        << r.yearly_mean_spot[y] << ',';
      if (point >= shift) f << series[point - shift];
      f << ',' << r.bid_change << ',' << r.spot_change << ',' << (r.failed ? 1 : 0) << '\n';
    }
  }
}

inline void write_equilibrium_csv(const EquilibriumReport& rep, const SystemModel& sys, const std::string& dir) {
  write_convergence_csv(rep, sys, dir + "/convergence.csv");
  const auto& m = rep.state.market;
  const auto& cd = rep.centralized;
  {
    auto f = detail::open_csv(dir, "spot_cd_vs_ne.csv");
    f << "stage,block,scenario,cd_spot,ne_spot\n";
    for (int t = 0; t < m.stages; ++t)
      for (int b = 0; b < m.blocks; ++b)
        for (int s = 0; s < m.scenarios; ++s)
          f << t << ',' << b << ',' << s << ',' << cd.spot_at(t, b, s) << ',' << m.spot_at(t, s, b) << '\n';
  }
  {
    auto f = detail::open_csv(dir, "revenue_by_agent.csv");
    f << "agent,kind,stage,cd_revenue,ne_revenue\n";
    const auto ne = ne_stage_revenue(sys, m);
    const auto cdr = cd_stage_revenue(sys, cd);
    for (std::size_t a = 0; a < sys.agents.size(); ++a)
      for (int t = 0; t < m.stages; ++t)
        f << csv_field(sys.agents[a].id) << ','
          << (sys.agents[a].kind == AgentKind::PriceMaker ? "maker" : "taker") << ',' << t << ',' << cdr[a][t]
          << ',' << ne[a][t] << '\n';
  }
  {
    auto f = detail::open_csv(dir, "bids.csv");
    f << "agent,stage,scenario,block,segment,price,quantity,accepted\n";
    for (std::size_t a = 0; a < rep.state.bids.size(); ++a)
      for (int t = 0; t < m.stages; ++t)
        for (int s = 0; s < m.scenarios; ++s)
          for (int b = 0; b < m.blocks; ++b) {
            const auto& bid = rep.state.bids[a].at(t, s, b);
            const auto& acc = m.segments[a][m.tsb(t, s, b)];
            for (std::size_t k = 0; k < bid.segments.size(); ++k)
              f << csv_field(sys.agents[a].id) << ',' << t << ',' << s << ',' << b << ',' << k << ','
                << bid.segments[k].price << ',' << bid.segments[k].quantity << ',' << acc[k] << '\n';
          }
  }
}

}  // namespace hydromarket
