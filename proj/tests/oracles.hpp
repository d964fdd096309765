#pragma once

// Independent reference implementations used only by the tests.

#include <hydromarket/inflow.hpp>
#include <hydromarket/lp.hpp>
#include <hydromarket/market.hpp>
#include <hydromarket/rng.hpp>
#include <hydromarket/system_model.hpp>

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace oracle {

struct Fill {
  double spot = 0.0;
  std::vector<double> accepted;
  double deficit = 0.0;
};

// Sort-and-fill clearing with pro-rata sharing inside a price level.
inline Fill sort_and_fill(const std::vector<hydromarket::BidSegment>& offers, double demand, double deficit_cost) {
  Fill f;
  f.accepted.assign(offers.size(), 0.0);
  if (demand <= 0) return f;
  std::vector<std::size_t> idx(offers.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return offers[a].price < offers[b].price; });
  double left = demand;
  std::size_t k = 0;
  while (k < idx.size() && left > 0) {
    std::size_t end = k;
    double level = 0;
    while (end < idx.size() && offers[idx[end]].price == offers[idx[k]].price) level += offers[idx[end++]].quantity;
    if (level > 0) {
      const double take = std::min(level, left);
      for (std::size_t m = k; m < end; ++m) f.accepted[idx[m]] = take * offers[idx[m]].quantity / level;
      left -= take;
      f.spot = offers[idx[k]].price;
    }
    k = end;
  }
  if (left > 0) {
    f.deficit = left;
    f.spot = deficit_cost;
  }
  return f;
}

// Deterministic-equivalent LP of the dispatch over the full opening tree
// rooted at scenario s's stage-0 inflows. Stage t >= 1 inflows of a node are
// the AR map of its ancestors plus opening l's residual. Quantities in MW.
inline double extensive_form_cost(const hydromarket::SystemModel& sys, const hydromarket::ScenarioSet& sc, int s) {
  using namespace hydromarket;
  const int T = sys.horizon.stages, B = sys.horizon.blocks(), L = sc.openings;
  const int H = static_cast<int>(sys.hydros.size());
  LinearProgram lp;
  // history[i]: inflows most recent first, including the node's own.
  std::function<void(int, double, std::vector<int>, std::vector<std::vector<double>>)> node =
      [&](int t, double prob, std::vector<int> v_prev, std::vector<std::vector<double>> history) {
        std::vector<int> u(H), x(H), v(H);
        std::vector<std::vector<int>> e(H, std::vector<int>(B));
        for (int i = 0; i < H; ++i) {
          const auto& h = sys.hydros[i];
          u[i] = lp.add_variable("", 0, h.max_turbine);
          x[i] = lp.add_variable("", 0, kInf);
          v[i] = lp.add_variable("", 0, h.max_storage);
          for (int b = 0; b < B; ++b) e[i][b] = lp.add_variable("", 0, h.max_generation);
        }
        for (int i = 0; i < H; ++i) {
          std::vector<Term> row{{v[i], 1}, {u[i], 1}, {x[i], 1}};
          for (int k = 0; k < H; ++k)
            if (sys.hydros[k].downstream && *sys.hydros[k].downstream == sys.hydros[i].id) {
              row.push_back({u[k], -1});
              row.push_back({x[k], -1});
            }
          double rhs = history[i][0];
          if (t == 0) rhs += sys.hydros[i].initial_storage;
          else row.push_back({v_prev[i], -1});
          lp.add_constraint("", row, Relation::Equal, rhs);
          std::vector<Term> conv{{u[i], -sys.hydros[i].production_factor}};
          for (int b = 0; b < B; ++b) conv.push_back({e[i][b], sys.horizon.block_hours(b)});
          lp.add_constraint("", conv, Relation::Equal, 0);
        }
        for (int b = 0; b < B; ++b) {
          const double f = sys.horizon.block_hours(b);
          std::vector<Term> row;
          for (const auto& g : sys.thermals) row.push_back({lp.add_variable("", 0, g.capacity, prob * g.cost * f), 1});
          row.push_back({lp.add_variable("", 0, kInf, prob * sys.deficit_cost() * f), 1});
          for (int i = 0; i < H; ++i) row.push_back({e[i][b], 1});
          double r = 0;
          for (const auto& p : sys.renewables) r += p.at(t, b, s);
          lp.add_constraint("", row, Relation::Equal, std::max(0.0, sys.horizon.demand[t][b] - r));
        }
        if (t + 1 == T) return;
        for (int l = 0; l < L; ++l) {
          auto next = history;
          for (int i = 0; i < H; ++i) {
            const auto& phi = sys.inflow.hydros[i].coefficients(t + 1);
            double a = sc.opening(t + 1, i, l);
            for (std::size_t p = 0; p < phi.size(); ++p) a += phi[p] * history[i][p];
            next[i].insert(next[i].begin(), a);
          }
          node(t + 1, prob / L, v, next);
        }
      };
  std::vector<std::vector<double>> root(H);
  for (int i = 0; i < H; ++i) {
    root[i].push_back(sc.inflow(0, i, s));
    for (double a : sys.inflow.hydros[i].history) root[i].push_back(a);
  }
  node(0, 1.0, {}, root);
  const auto sol = solve(lp);
  if (!sol.optimal()) throw std::runtime_error("extensive form not optimal");
  return sol.objective;
}

inline double extensive_form_cost(const hydromarket::SystemModel& sys, const hydromarket::ScenarioSet& sc) {
  double c = 0;
  for (int s = 0; s < sc.scenarios; ++s) c += extensive_form_cost(sys, sc, s);
  return c / sc.scenarios;
}

// Small random hydrothermal system: <= 2 hydros, <= 3 thermals, <= 4 stages,
// <= 3 scenarios and openings, AR(1) inflows with nonnegative coefficients and
// lognormal residuals (so inflows never need clamping).
inline hydromarket::SystemModel random_small_system(hydromarket::Rng& rng) {
  using namespace hydromarket;
  SystemModel sys;
  sys.name = "random";
  auto& h = sys.horizon;
  h.stages = 2 + rng.uniform_int(3);
  h.block_weights = rng.uniform() < 0.5 ? std::vector<double>{1.0} : std::vector<double>{0.4, 0.6};
  h.stage_hours = 10;
  h.scenarios = 1 + rng.uniform_int(3);
  h.openings = 1 + rng.uniform_int(3);
  const int G = 1 + rng.uniform_int(3), H = 1 + rng.uniform_int(2);
  double cap = 0;
  for (int j = 0; j < G; ++j) {
    sys.thermals.push_back({"g" + std::to_string(j), 10 + 190 * rng.uniform(), 5 + 20 * rng.uniform()});
    cap += sys.thermals.back().capacity;
  }
  for (int i = 0; i < H; ++i) {
    HydroPlant p;
    p.id = "h" + std::to_string(i);
    p.production_factor = 0.5 + rng.uniform();
    p.max_turbine = 20 + 30 * rng.uniform();
    p.max_storage = 50 + 100 * rng.uniform();
    p.max_generation = 5 + 15 * rng.uniform();
    p.initial_storage = p.max_storage * rng.uniform();
    if (i == 1 && rng.uniform() < 0.5) sys.hydros[0].downstream = p.id;
    sys.hydros.push_back(p);
    cap += p.max_generation;
    HydroInflow in;
    in.ar = {{0.6 * rng.uniform()}};
    in.residual = {ResidualDist{ResidualKind::LogNormal, 5 + 10 * rng.uniform(), 4 * rng.uniform(), {}}};
    in.history = {10 * rng.uniform()};
    sys.inflow.hydros.push_back(in);
  }
  for (int t = 0; t < h.stages; ++t) {
    std::vector<double> row;
    for (int b = 0; b < h.blocks(); ++b) row.push_back(cap * (0.4 + 0.5 * rng.uniform()));
    h.demand.push_back(row);
  }
  sys.finalize();
  sys.validate();
  return sys;
}

}  // namespace oracle
