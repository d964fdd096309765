#pragma once

// Spot-price Markov chain: per-stage k-means clusters of block-price vectors
// and transition matrices estimated by counting scenario moves.

#include <hydromarket/rng.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket {

using PriceVector = std::vector<double>;  // one price per block

struct Clustering {
  std::vector<PriceVector> centroids;
  std::vector<int> assignment;
  std::vector<double> sse_trace;  // within-cluster SSE after each Lloyd iteration (winning restart)
  double sse = 0.0;
};

namespace detail {

inline double weighted_sq(const PriceVector& a, const PriceVector& b, const std::vector<double>& w) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += w[k] * (a[k] - b[k]) * (a[k] - b[k]);
  return d;
}

inline int distinct_count(const std::vector<PriceVector>& pts) {
  std::set<PriceVector> s(pts.begin(), pts.end());
  return static_cast<int>(s.size());
}

inline constexpr std::uint64_t kClusterTag = 0x4b4d4541ull;  // "KMEA"
inline constexpr std::uint64_t kOpeningLabelTag = 0x4c41424cull;  // "LABL"

inline Clustering lloyd(const std::vector<PriceVector>& pts, const std::vector<double>& w, int K, Rng& rng) {
  const int n = static_cast<int>(pts.size());
  Clustering c;
  // k-means++ seeding.
  c.centroids.push_back(pts[rng.uniform_int(n)]);
  std::vector<double> d2(n);
  while (static_cast<int>(c.centroids.size()) < K) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& ctr : c.centroids) best = std::min(best, weighted_sq(pts[i], ctr, w));
      d2[i] = best;
    }
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    int pick = 0;
    if (total > 0.0) pick = rng.categorical(d2);
    else pick = rng.uniform_int(n);
    c.centroids.push_back(pts[pick]);
  }

  c.assignment.assign(n, -1);
  for (int iter = 0; iter < 200; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int arg = 0;
      double best = std::numeric_limits<double>::infinity();
      for (int k = 0; k < K; ++k) {
        const double d = weighted_sq(pts[i], c.centroids[k], w);
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      if (c.assignment[i] != arg) {
        c.assignment[i] = arg;
        changed = true;
      }
    }
    // Empty clusters take the point farthest from its centroid.
    for (int k = 0; k < K; ++k) {
      if (std::count(c.assignment.begin(), c.assignment.end(), k) > 0) continue;
      int far = -1;
      double worst = -1.0;
      for (int i = 0; i < n; ++i) {
        if (std::count(c.assignment.begin(), c.assignment.end(), c.assignment[i]) <= 1) continue;
        const double d = weighted_sq(pts[i], c.centroids[c.assignment[i]], w);
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      if (far >= 0) {
        c.assignment[far] = k;
        changed = true;
      }
    }
    // Update step.
    const std::size_t dims = pts[0].size();
    std::vector<PriceVector> sum(K, PriceVector(dims, 0.0));
    std::vector<int> cnt(K, 0);
    for (int i = 0; i < n; ++i) {
      ++cnt[c.assignment[i]];
      for (std::size_t b = 0; b < dims; ++b) sum[c.assignment[i]][b] += pts[i][b];
    }
    for (int k = 0; k < K; ++k)
      if (cnt[k] > 0)
        for (std::size_t b = 0; b < dims; ++b) c.centroids[k][b] = sum[k][b] / cnt[k];
    double sse = 0.0;
    for (int i = 0; i < n; ++i) sse += weighted_sq(pts[i], c.centroids[c.assignment[i]], w);
    c.sse_trace.push_back(sse);
    c.sse = sse;
    if (!changed) break;
  }
  return c;
}

}  // namespace detail

/// k-means (k-means++ seeding, Lloyd iterations, a few restarts) over
/// duration-weighted block-price vectors. Clusters are relabeled by ascending
/// weighted mean price.
inline Clustering cluster_stage(const std::vector<PriceVector>& prices, const std::vector<double>& block_weights, int K,
                                std::uint64_t seed, int restarts = 4) {
  if (prices.empty()) throw std::invalid_argument("cluster_stage: no price vectors");
  if (K < 1) throw std::invalid_argument("cluster_stage: K must be >= 1");
  for (const auto& p : prices)
    if (p.size() != block_weights.size()) throw std::invalid_argument("cluster_stage: dimension mismatch");
  const int distinct = detail::distinct_count(prices);
  if (K > distinct)
    throw std::invalid_argument("cluster_stage: K = " + std::to_string(K) + " exceeds the " +
                                std::to_string(distinct) + " distinct price vectors");
  Rng rng(seed, stream_id(detail::kClusterTag, {K, static_cast<std::int64_t>(prices.size())}));
  Clustering best;
  best.sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    auto c = detail::lloyd(prices, block_weights, K, rng);
    if (c.sse < best.sse - 1e-12 * (1.0 + std::abs(c.sse))) best = std::move(c);
  }
  // Stable labels: ascending weighted mean, ties by first member.
  std::vector<int> order(K);
  std::iota(order.begin(), order.end(), 0);
  auto mean = [&](int k) {
    double m = 0.0;
    for (std::size_t b = 0; b < block_weights.size(); ++b) m += block_weights[b] * best.centroids[k][b];
    return m;
  };
  auto first = [&](int k) {
    return static_cast<int>(std::find(best.assignment.begin(), best.assignment.end(), k) - best.assignment.begin());
  };
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double ma = mean(a), mb = mean(b);
    return ma != mb ? ma < mb : first(a) < first(b);
  });
  std::vector<int> relabel(K);
  for (int k = 0; k < K; ++k) relabel[order[k]] = k;
  Clustering out;
  out.sse = best.sse;
  out.sse_trace = best.sse_trace;
  for (int k = 0; k < K; ++k) out.centroids.push_back(best.centroids[order[k]]);
  for (int a : best.assignment) out.assignment.push_back(relabel[a]);
  return out;
}

using TransitionMatrix = std::vector<std::vector<double>>;

/// p[k][m] = #{s : from[s] = k and to[s] = m} / #{s : from[s] = k}; rows of
/// unvisited source clusters are uniform.
inline TransitionMatrix estimate_transitions(const std::vector<int>& from, const std::vector<int>& to, int k_from,
                                             int k_to) {
  if (from.size() != to.size()) throw std::invalid_argument("estimate_transitions: scenario sets differ");
  TransitionMatrix p(k_from, std::vector<double>(k_to, 0.0));
  std::vector<double> n(k_from, 0.0);
  for (std::size_t s = 0; s < from.size(); ++s) {
    p[from[s]][to[s]] += 1.0;
    n[from[s]] += 1.0;
  }
  for (int k = 0; k < k_from; ++k) {
    if (n[k] == 0.0) std::fill(p[k].begin(), p[k].end(), 1.0 / k_to);
    else
      for (auto& x : p[k]) x /= n[k];
  }
  return p;
}

/// Cluster label of each opening: i.i.d. categorical draws from a transition row.
inline std::vector<int> assign_openings(const std::vector<double>& row, int openings, std::uint64_t seed,
                                        std::uint64_t stream = 0) {
  Rng rng(seed, stream);
  std::vector<int> labels(openings);
  for (auto& l : labels) l = rng.categorical(row);
  return labels;
}

struct MarkovChain {
  std::vector<Clustering> stages;                   // per stage
  std::vector<TransitionMatrix> transitions;        // [t] : stage t -> t+1
  std::vector<std::vector<std::vector<int>>> opening_labels;  // [t][s][l]: cluster at t+1

  int num_stages() const { return static_cast<int>(stages.size()); }
  int clusters(int t) const { return static_cast<int>(stages[t].centroids.size()); }
  int cluster_of(int t, int s) const { return stages[t].assignment[s]; }
  std::vector<int> members(int t, int k) const {
    std::vector<int> m;
    for (std::size_t s = 0; s < stages[t].assignment.size(); ++s)
      if (stages[t].assignment[s] == k) m.push_back(static_cast<int>(s));
    return m;
  }
  int opening_label(int t, int s, int l) const { return opening_labels[t][s][l]; }
};

/// Builds the chain from spot scenarios spots[t][s][b]. Each stage uses
/// min(K, distinct vectors) clusters.
inline MarkovChain build_markov_chain(const std::vector<std::vector<PriceVector>>& spots,
                                      const std::vector<double>& block_weights, int K, int openings,
                                      std::uint64_t seed) {
  MarkovChain chain;
  const int T = static_cast<int>(spots.size());
  for (int t = 0; t < T; ++t) {
    const int k_eff = std::min(K, detail::distinct_count(spots[t]));
    chain.stages.push_back(cluster_stage(spots[t], block_weights, k_eff, seed ^ (0x9e37ull * (t + 1))));
  }
  for (int t = 0; t + 1 < T; ++t)
    chain.transitions.push_back(estimate_transitions(chain.stages[t].assignment, chain.stages[t + 1].assignment,
                                                     chain.clusters(t), chain.clusters(t + 1)));
  chain.opening_labels.resize(T);
  for (int t = 0; t < T; ++t) {
    const int S = static_cast<int>(spots[t].size());
    chain.opening_labels[t].resize(S);
    if (t + 1 >= T) continue;
    for (int s = 0; s < S; ++s)
      chain.opening_labels[t][s] = assign_openings(chain.transitions[t][chain.cluster_of(t, s)], openings, seed,
                                                   stream_id(detail::kOpeningLabelTag, {t, s}));
  }
  return chain;
}

// CSV: clusters.csv (stage,cluster,block,centroid,members) and transitions.csv (stage,from,to,p).
inline void write_chain_csv(const MarkovChain& chain, const std::string& clusters_path,
                            const std::string& transitions_path) {
  std::ofstream c(clusters_path);
  if (!c) throw std::runtime_error("cannot write " + clusters_path);
  c.precision(12);
  c << "stage,cluster,block,centroid,members\n";
  for (int t = 0; t < chain.num_stages(); ++t)
    for (int k = 0; k < chain.clusters(t); ++k)
      for (std::size_t b = 0; b < chain.stages[t].centroids[k].size(); ++b)
        c << t << ',' << k << ',' << b << ',' << chain.stages[t].centroids[k][b] << ','
          << chain.members(t, k).size() << '\n';
  std::ofstream p(transitions_path);
  if (!p) throw std::runtime_error("cannot write " + transitions_path);
  p.precision(12);
  p << "stage,from,to,p\n";
  for (std::size_t t = 0; t < chain.transitions.size(); ++t)
    for (std::size_t a = 0; a < chain.transitions[t].size(); ++a)
      for (std::size_t b = 0; b < chain.transitions[t][a].size(); ++b)
        p << t << ',' << a << ',' << b << ',' << chain.transitions[t][a][b] << '\n';
}

}  // namespace hydromarket
