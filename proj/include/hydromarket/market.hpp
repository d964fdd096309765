#pragma once

// Bid-based market clearing, residual-demand pricing, sawtooth revenue and its
// concave hull.
//
// Price convention: the spot is the price of the last accepted offer, i.e. the
// left derivative of the clearing cost in demand. Fully displaced markets
// (residual demand <= 0) price at 0, unserved demand at the deficit cost.

#include <hydromarket/lp.hpp>
#include <hydromarket/system_model.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket {

struct BidSegment {
  double price = 0.0;
  double quantity = 0.0;  // MW
};

struct Bid {
  int agent = 0;
  int stage = 0;
  int scenario = 0;
  int block = 0;
  std::vector<BidSegment> segments;

  double total() const {
    double q = 0.0;
    for (const auto& s : segments) q += s.quantity;
    return q;
  }
};

struct ClearingOutcome {
  double spot = 0.0;
  std::vector<double> accepted;  // per offered segment, same order as the input
  double dispatched = 0.0;
  double deficit = 0.0;
};

namespace detail {

inline LpSolution clearing_lp(const std::vector<BidSegment>& offers, double demand, double deficit_cost,
                              LinearProgram& lp) {
  std::vector<Term> row;
  for (std::size_t i = 0; i < offers.size(); ++i)
    row.push_back({lp.add_variable("e" + std::to_string(i), 0.0, std::max(0.0, offers[i].quantity), offers[i].price), 1.0});
  row.push_back({lp.add_variable("deficit", 0.0, kInf, deficit_cost), 1.0});
  lp.add_constraint("balance", row, Relation::Equal, demand);
  return solve(lp);
}

}  // namespace detail

/// Clears offers against an inelastic demand (MW). Equal-price offers share
/// the marginal quantity pro rata.
inline ClearingOutcome clear(const std::vector<BidSegment>& offers, double demand, double deficit_cost) {
  if (!(demand >= 0.0)) throw std::invalid_argument("clear: demand must be >= 0");
  ClearingOutcome out;
  out.accepted.assign(offers.size(), 0.0);
  if (demand == 0.0) return out;

  LinearProgram lp;
  const auto sol = detail::clearing_lp(offers, demand, deficit_cost, lp);
  if (!sol.optimal()) throw std::runtime_error("clearing LP not optimal");
  for (std::size_t i = 0; i < offers.size(); ++i) out.accepted[i] = sol.primal[i];
  out.deficit = sol.primal[offers.size()];

  // Left derivative: the balance dual just below the requested demand.
  const double eps = std::min(1e-7 * std::max(1.0, demand), 0.5 * demand);
  LinearProgram lp2;
  const auto below = detail::clearing_lp(offers, demand - eps, deficit_cost, lp2);
  out.spot = below.dual[0];

  // Pro-rata among equal prices.
  std::map<double, std::pair<double, double>> level;  // price -> (accepted, offered)
  for (std::size_t i = 0; i < offers.size(); ++i) {
    auto& l = level[offers[i].price];
    l.first += out.accepted[i];
    l.second += std::max(0.0, offers[i].quantity);
  }
  for (std::size_t i = 0; i < offers.size(); ++i) {
    const auto& l = level[offers[i].price];
    out.accepted[i] = l.second > 0.0 ? l.first * std::max(0.0, offers[i].quantity) / l.second : 0.0;
    out.accepted[i] = std::min(out.accepted[i], std::max(0.0, offers[i].quantity));
  }
  out.dispatched = demand - out.deficit;
  return out;
}

/// Flattens the segments of several bids into one offer list.
inline std::vector<BidSegment> offers_of(const std::vector<const Bid*>& bids) {
  std::vector<BidSegment> out;
  for (const Bid* b : bids)
    for (const auto& s : b->segments) out.push_back(s);
  return out;
}

/// Merit-order supply stack sorted by price.
class SupplyStack {
 public:
  SupplyStack(std::vector<BidSegment> offers, double deficit_cost) : deficit_cost_(deficit_cost) {
    offers.erase(std::remove_if(offers.begin(), offers.end(), [](const BidSegment& s) { return !(s.quantity > 0.0); }),
                 offers.end());
    std::stable_sort(offers.begin(), offers.end(),
                     [](const BidSegment& a, const BidSegment& b) { return a.price < b.price; });
    // Merge equal prices.
    for (const auto& s : offers) {
      if (!prices_.empty() && prices_.back() == s.price) {
        cumulative_.back() += s.quantity;
      } else {
        prices_.push_back(s.price);
        cumulative_.push_back((cumulative_.empty() ? 0.0 : cumulative_.back()) + s.quantity);
      }
    }
  }

  /// Price of the last accepted offer when serving `residual` MW.
  double price(double residual) const {
    if (residual <= 0.0) return 0.0;
    const auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), residual);
    if (it == cumulative_.end()) return deficit_cost_;
    return prices_[static_cast<std::size_t>(it - cumulative_.begin())];
  }

  const std::vector<double>& prices() const { return prices_; }
  const std::vector<double>& cumulative() const { return cumulative_; }
  double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }
  double deficit_cost() const { return deficit_cost_; }

 private:
  double deficit_cost_;
  std::vector<double> prices_, cumulative_;
};

/// pi_d(e): clearing price of the rivals when the agent supplies e MW.
inline double residual_price(const std::vector<BidSegment>& other_offers, double demand, double e,
                             double deficit_cost) {
  if (e < 0.0) throw std::invalid_argument("residual_price: e must be >= 0");
  return SupplyStack(other_offers, deficit_cost).price(demand - e);
}

struct RevenueSample {
  double e;
  double revenue;
};

/// Sample grid on [0, e_max]: every residual-demand breakpoint, its left limit,
/// plus the end points and the demand itself.
inline std::vector<double> sawtooth_grid(const SupplyStack& stack, double demand, double e_max) {
  std::vector<double> pts{0.0, e_max};
  const double eps = 1e-9 * e_max;
  auto add = [&](double e) {
    if (e >= 0.0 && e <= e_max) pts.push_back(e);
  };
  add(demand);
  add(demand - eps);
  for (double c : stack.cumulative()) {
    add(demand - c);
    add(demand - c - eps);
  }
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  return pts;
}

inline std::vector<RevenueSample> sawtooth_revenue(const SupplyStack& stack, double demand,
                                                   const std::vector<double>& grid) {
  std::vector<RevenueSample> out;
  out.reserve(grid.size());
  for (double e : grid) out.push_back({e, e * stack.price(demand - e)});
  return out;
}

inline std::vector<RevenueSample> sawtooth_revenue(const std::vector<BidSegment>& other_offers, double demand,
                                                   double e_max, double deficit_cost) {
  SupplyStack stack(other_offers, deficit_cost);
  return sawtooth_revenue(stack, demand, sawtooth_grid(stack, demand, e_max));
}

/// Concave piecewise-linear revenue as a vertex list with ascending e.
struct RevenueCurve {
  std::vector<RevenueSample> vertices;

  double e_max() const { return vertices.empty() ? 0.0 : vertices.back().e; }

  double evaluate(double e) const {
    if (vertices.empty()) return 0.0;
    if (e <= vertices.front().e) return vertices.front().revenue;
    for (std::size_t k = 1; k < vertices.size(); ++k) {
      if (e <= vertices[k].e) {
        const auto& a = vertices[k - 1];
        const auto& b = vertices[k];
        return a.revenue + (b.revenue - a.revenue) * (e - a.e) / (b.e - a.e);
      }
    }
    return vertices.back().revenue;
  }

  struct Facet {
    double slope;
    double intercept;
  };

  // One line per hull edge; the hypograph on [0, e_max] is {r <= slope*e + intercept}.
  std::vector<Facet> facets() const {
    std::vector<Facet> f;
    for (std::size_t k = 1; k < vertices.size(); ++k) {
      const auto& a = vertices[k - 1];
      const auto& b = vertices[k];
      const double slope = (b.revenue - a.revenue) / (b.e - a.e);
      f.push_back({slope, a.revenue - slope * a.e});
    }
    if (f.empty() && !vertices.empty()) f.push_back({0.0, vertices.front().revenue});
    return f;
  }

  bool is_concave(double tol = 1e-12) const {
    const auto f = facets();
    for (std::size_t k = 1; k < f.size(); ++k)
      if (!(f[k].slope < f[k - 1].slope + tol * (1.0 + std::abs(f[k - 1].slope)))) return false;
    return true;
  }
};

/// Upper concave envelope (monotone chain). Vertices are a subset of the
/// samples; collinear interior points are dropped.
inline RevenueCurve concave_hull(std::vector<RevenueSample> samples) {
  if (samples.size() < 2) throw std::invalid_argument("concave_hull: need at least 2 samples");
  std::stable_sort(samples.begin(), samples.end(), [](const auto& a, const auto& b) { return a.e < b.e; });
  // Keep the highest revenue per abscissa.
  std::vector<RevenueSample> pts;
  for (const auto& s : samples) {
    if (!pts.empty() && pts.back().e == s.e) pts.back().revenue = std::max(pts.back().revenue, s.revenue);
    else pts.push_back(s);
  }
  if (pts.size() < 2) throw std::invalid_argument("concave_hull: samples collapse to a single point");
  RevenueCurve c;
  auto& h = c.vertices;
  for (const auto& p : pts) {
    while (h.size() >= 2) {
      const auto& a = h[h.size() - 2];
      const auto& b = h.back();
      // Remove b unless it lies strictly above the chord a-p.
      const double cross = (b.e - a.e) * (p.revenue - a.revenue) - (b.revenue - a.revenue) * (p.e - a.e);
      if (cross >= 0.0) h.pop_back();
      else break;
    }
    h.push_back(p);
  }
  return c;
}

/// Rival bids seen as virtual thermal plants priced at their bid.
inline std::vector<ThermalPlant> plants_from_bids(const std::vector<const Bid*>& bids) {
  std::vector<ThermalPlant> out;
  for (const Bid* b : bids)
    for (std::size_t k = 0; k < b->segments.size(); ++k)
      out.push_back({"bid_a" + std::to_string(b->agent) + "_s" + std::to_string(k), b->segments[k].price,
                     b->segments[k].quantity});
  return out;
}

inline std::vector<BidSegment> offers_from_plants(const std::vector<ThermalPlant>& plants) {
  std::vector<BidSegment> out;
  for (const auto& p : plants) out.push_back({p.cost, p.capacity});
  return out;
}

// CSV: agent,stage,scenario,block,segment,price,quantity,accepted
inline void write_bids_csv(const std::string& path, const std::vector<Bid>& bids,
                           const std::vector<std::vector<double>>* accepted = nullptr) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f.precision(12);
  f << "agent,stage,scenario,block,segment,price,quantity,accepted\n";
  for (std::size_t k = 0; k < bids.size(); ++k) {
    const auto& b = bids[k];
    for (std::size_t n = 0; n < b.segments.size(); ++n) {
      f << b.agent << ',' << b.stage << ',' << b.scenario << ',' << b.block << ',' << n << ','
        << b.segments[n].price << ',' << b.segments[n].quantity << ',';
      if (accepted && k < accepted->size() && n < (*accepted)[k].size()) f << (*accepted)[k][n];
      f << '\n';
    }
  }
}

}  // namespace hydromarket
