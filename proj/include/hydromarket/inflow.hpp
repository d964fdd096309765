#pragma once

// Periodic autoregressive inflows.
//
// Stage t's inflow of hydro i is  a_t = sum_p phi^p_t * a_{t-p} + xi_t,  where the
// coefficients and residual law cycle through the hydro's season list (season
// = t mod number of seasons) and are indexed by the stage being produced.
// Lag windows are stored most-recent-first: window[0] = a_{t-1}, window[1] = a_{t-2}...

#include <hydromarket/rng.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket {

enum class ResidualKind { LogNormal, Normal, Empirical };

struct ResidualDist {
  ResidualKind kind = ResidualKind::Normal;
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> samples;  // Empirical only

  // u is uniform on (0,1) and z standard normal, both from the same stream.
  double sample(double u, double z) const {
    switch (kind) {
      case ResidualKind::LogNormal: {
        if (std == 0.0) return mean;
        const double s2 = std::log1p((std * std) / (mean * mean));
        const double mu = std::log(mean) - 0.5 * s2;
        return std::exp(mu + std::sqrt(s2) * z);
      }
      case ResidualKind::Normal: return mean + std * z;
      case ResidualKind::Empirical: {
        const auto n = samples.size();
        auto idx = static_cast<std::size_t>(u * static_cast<double>(n));
        return samples[std::min(idx, n - 1)];
      }
    }
    return 0.0;
  }

  double expected() const {
    if (kind != ResidualKind::Empirical) return mean;
    double s = 0.0;
    for (double x : samples) s += x;
    return samples.empty() ? 0.0 : s / static_cast<double>(samples.size());
  }

  bool nonnegative() const {
    switch (kind) {
      case ResidualKind::LogNormal: return true;
      case ResidualKind::Normal: return std == 0.0 && mean >= 0.0;
      case ResidualKind::Empirical:
        return std::all_of(samples.begin(), samples.end(), [](double x) { return x >= 0.0; });
    }
    return false;
  }
};

struct HydroInflow {
  std::vector<std::vector<double>> ar;  // [season][p-1] -> phi^p
  std::vector<ResidualDist> residual;   // [season]
  std::vector<double> history;          // a_{-1}, a_{-2}, ... (most recent first)
  std::string group;                    // hydros of a group share one random stream

  int order(int t) const {
    return ar.empty() ? 0 : static_cast<int>(ar[static_cast<std::size_t>(t) % ar.size()].size());
  }
  const std::vector<double>& coefficients(int t) const {
    static const std::vector<double> none;
    return ar.empty() ? none : ar[static_cast<std::size_t>(t) % ar.size()];
  }
  const ResidualDist& residual_at(int t) const { return residual[static_cast<std::size_t>(t) % residual.size()]; }
};

struct InflowModel {
  std::vector<HydroInflow> hydros;  // aligned with SystemModel::hydros

  int max_lag() const {
    int w = 0;
    for (const auto& h : hydros)
      for (const auto& c : h.ar) w = std::max(w, static_cast<int>(c.size()));
    return w;
  }
  // Number of past inflows carried in the state; at least the current one.
  int window() const { return std::max(1, max_lag()); }

  void validate(int num_hydros) const {
    if (static_cast<int>(hydros.size()) != num_hydros)
      throw std::invalid_argument("inflow model: expected " + std::to_string(num_hydros) + " hydro entries, got " +
                                  std::to_string(hydros.size()));
    for (std::size_t i = 0; i < hydros.size(); ++i) {
      const auto& h = hydros[i];
      const std::string who = "inflow model of hydro #" + std::to_string(i);
      if (h.residual.empty()) throw std::invalid_argument(who + ": no residual distribution");
      for (const auto& season : h.ar)
        for (double c : season)
          if (!std::isfinite(c)) throw std::invalid_argument(who + ": non-finite AR coefficient");
      for (const auto& r : h.residual) {
        if (!std::isfinite(r.mean) || !std::isfinite(r.std) || r.std < 0)
          throw std::invalid_argument(who + ": invalid residual parameters");
        if (r.kind == ResidualKind::LogNormal && r.mean <= 0 && r.std > 0)
          throw std::invalid_argument(who + ": lognormal residual needs a positive mean");
        if (r.kind == ResidualKind::Empirical && r.samples.empty())
          throw std::invalid_argument(who + ": empirical residual without samples");
      }
      int need = 0;
      for (const auto& season : h.ar) need = std::max(need, static_cast<int>(season.size()));
      if (static_cast<int>(h.history.size()) < need)
        throw std::invalid_argument(who + ": history shorter than the AR order");
    }
  }
};

/// One AR step for hydro i producing stage t's inflow, clamped at zero.
inline double ar_step(const InflowModel& model, int t, int i, const std::vector<double>& lagged, double residual) {
  const auto& c = model.hydros.at(i).coefficients(t);
  if (lagged.size() < c.size())
    throw std::invalid_argument("ar_step: hydro " + std::to_string(i) + " stage " + std::to_string(t) + " needs " +
                                std::to_string(c.size()) + " lagged values, got " + std::to_string(lagged.size()));
  double a = residual;
  for (std::size_t p = 0; p < c.size(); ++p) a += c[p] * lagged[p];
  return std::max(0.0, a);
}

struct ScenarioSet {
  int stages = 0, hydros = 0, scenarios = 0, openings = 0;
  std::uint64_t seed = 0;
  std::vector<double> forward;    // [t][i][s]
  std::vector<double> residuals;  // [t][i][l]

  double& inflow(int t, int i, int s) { return forward[(static_cast<std::size_t>(t) * hydros + i) * scenarios + s]; }
  double inflow(int t, int i, int s) const {
    return forward[(static_cast<std::size_t>(t) * hydros + i) * scenarios + s];
  }
  double& opening(int t, int i, int l) { return residuals[(static_cast<std::size_t>(t) * hydros + i) * openings + l]; }
  double opening(int t, int i, int l) const {
    return residuals[(static_cast<std::size_t>(t) * hydros + i) * openings + l];
  }

  bool operator==(const ScenarioSet&) const = default;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline constexpr std::uint64_t kForwardTag = 0x464f5257ull;  // "FORW"
inline constexpr std::uint64_t kOpeningTag = 0x4f50454eull;  // "OPEN"

// Residual draw of hydro i for (tag, t, index); hydros of one group share the
// (u, z) pair and therefore move together.
inline double draw_residual(const InflowModel& model, int i, std::uint64_t seed, std::uint64_t tag, int t,
                            int index) {
  const auto& h = model.hydros[i];
  const std::string& g = h.group.empty() ? ("#" + std::to_string(i)) : h.group;
  Rng rng(seed, stream_id(tag, {static_cast<std::int64_t>(fnv1a(g)), t, index}));
  const double u = rng.uniform();
  const double z = rng.normal();
  return h.residual_at(t).sample(u, z);
}

}  // namespace detail

/// Forward inflow paths follow the AR recursion from the history; opening
/// residuals are drawn independently per stage.
inline ScenarioSet generate_scenarios(const InflowModel& model, int stages, int scenarios, int openings,
                                      std::uint64_t seed) {
  if (stages < 1 || scenarios < 1 || openings < 1)
    throw std::invalid_argument("generate_scenarios: counts must be >= 1");
  ScenarioSet set;
  set.stages = stages;
  set.hydros = static_cast<int>(model.hydros.size());
  set.scenarios = scenarios;
  set.openings = openings;
  set.seed = seed;
  set.forward.assign(static_cast<std::size_t>(stages) * set.hydros * scenarios, 0.0);
  set.residuals.assign(static_cast<std::size_t>(stages) * set.hydros * openings, 0.0);
  for (int i = 0; i < set.hydros; ++i) {
    const auto& h = model.hydros[i];
    for (int s = 0; s < scenarios; ++s) {
      std::vector<double> window = h.history;  // most recent first
      for (int t = 0; t < stages; ++t) {
        const double xi = detail::draw_residual(model, i, seed, detail::kForwardTag, t, s);
        const double a = ar_step(model, t, i, window, xi);
        set.inflow(t, i, s) = a;
        window.insert(window.begin(), a);
        if (window.size() > h.history.size() + 1) window.pop_back();
      }
    }
    for (int t = 0; t < stages; ++t)
      for (int l = 0; l < openings; ++l)
        set.opening(t, i, l) = detail::draw_residual(model, i, seed, detail::kOpeningTag, t, l);
  }
  return set;
}

/// Incoming lag window at stage 0 for scenario s: the stage-0 inflow followed
/// by history, truncated to `width`.
inline std::vector<double> initial_window(const InflowModel& model, const ScenarioSet& sc, int i, int s, int width) {
  std::vector<double> w(width, 0.0);
  w[0] = sc.inflow(0, i, s);
  const auto& hist = model.hydros[i].history;
  for (int j = 1; j < width; ++j) w[j] = j - 1 < static_cast<int>(hist.size()) ? hist[j - 1] : 0.0;
  return w;
}

// CSV audit format: stage,hydro,scenario,value and stage,hydro,opening,value.
inline void write_scenarios_csv(const ScenarioSet& sc, const std::string& forward_path,
                                const std::string& openings_path) {
  std::ofstream f(forward_path);
  if (!f) throw std::runtime_error("cannot write " + forward_path);
  f.precision(17);
  f << "stage,hydro,scenario,value\n";
  for (int t = 0; t < sc.stages; ++t)
    for (int i = 0; i < sc.hydros; ++i)
      for (int s = 0; s < sc.scenarios; ++s) f << t << ',' << i << ',' << s << ',' << sc.inflow(t, i, s) << '\n';
  std::ofstream o(openings_path);
  if (!o) throw std::runtime_error("cannot write " + openings_path);
  o.precision(17);
  o << "stage,hydro,opening,value\n";
  for (int t = 0; t < sc.stages; ++t)
    for (int i = 0; i < sc.hydros; ++i)
      for (int l = 0; l < sc.openings; ++l) o << t << ',' << i << ',' << l << ',' << sc.opening(t, i, l) << '\n';
}

namespace detail {

struct Row4 {
  int a, b, c;
  double v;
};

inline std::vector<Row4> read_rows4(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  std::getline(in, line);
  std::vector<Row4> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    Row4 r{};
    if (!(ss >> r.a >> r.b >> r.c >> r.v))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

inline ScenarioSet read_scenarios_csv(const std::string& forward_path, const std::string& openings_path) {
  const auto fwd = detail::read_rows4(forward_path);
  const auto opn = detail::read_rows4(openings_path);
  ScenarioSet sc;
  for (const auto& r : fwd) {
    sc.stages = std::max(sc.stages, r.a + 1);
    sc.hydros = std::max(sc.hydros, r.b + 1);
    sc.scenarios = std::max(sc.scenarios, r.c + 1);
  }
  for (const auto& r : opn) sc.openings = std::max(sc.openings, r.c + 1);
  sc.forward.assign(static_cast<std::size_t>(sc.stages) * sc.hydros * sc.scenarios, 0.0);
  sc.residuals.assign(static_cast<std::size_t>(sc.stages) * sc.hydros * sc.openings, 0.0);
  for (const auto& r : fwd) sc.inflow(r.a, r.b, r.c) = r.v;
  for (const auto& r : opn) {
    if (r.a >= sc.stages || r.b >= sc.hydros) throw std::runtime_error("openings file does not match forward file");
    sc.opening(r.a, r.b, r.c) = r.v;
  }
  return sc;
}

// JSON ----------------------------------------------------------------------

inline ResidualDist residual_from_json(const nlohmann::json& j) {
  ResidualDist r;
  const std::string type = j.value("type", "lognormal");
  if (type == "lognormal") r.kind = ResidualKind::LogNormal;
  else if (type == "normal") r.kind = ResidualKind::Normal;
  else if (type == "empirical") r.kind = ResidualKind::Empirical;
  else throw std::invalid_argument("unknown residual type '" + type + "'");
  r.mean = j.value("mean", 0.0);
  r.std = j.value("std", 0.0);
  if (j.contains("samples")) r.samples = j.at("samples").get<std::vector<double>>();
  return r;
}

inline nlohmann::json residual_to_json(const ResidualDist& r) {
  nlohmann::json j;
  switch (r.kind) {
    case ResidualKind::LogNormal: j["type"] = "lognormal"; break;
    case ResidualKind::Normal: j["type"] = "normal"; break;
    case ResidualKind::Empirical: j["type"] = "empirical"; break;
  }
  if (r.kind == ResidualKind::Empirical) j["samples"] = r.samples;
  else {
    j["mean"] = r.mean;
    j["std"] = r.std;
  }
  return j;
}

inline HydroInflow hydro_inflow_from_json(const nlohmann::json& j) {
  HydroInflow h;
  if (j.contains("ar")) {
    const auto& ar = j.at("ar");
    // Accept a flat list (one season) or a list of per-season lists.
    if (!ar.empty() && ar.front().is_number()) h.ar.push_back(ar.get<std::vector<double>>());
    else h.ar = ar.get<std::vector<std::vector<double>>>();
  }
  const auto& res = j.at("residual");
  if (res.is_array()) {
    for (const auto& r : res) h.residual.push_back(residual_from_json(r));
  } else {
    h.residual.push_back(residual_from_json(res));
  }
  if (j.contains("history")) h.history = j.at("history").get<std::vector<double>>();
  h.group = j.value("group", "");
  return h;
}

inline nlohmann::json hydro_inflow_to_json(const HydroInflow& h) {
  nlohmann::json j;
  j["ar"] = h.ar;
  j["residual"] = nlohmann::json::array();
  for (const auto& r : h.residual) j["residual"].push_back(residual_to_json(r));
  j["history"] = h.history;
  if (!h.group.empty()) j["group"] = h.group;
  return j;
}

}  // namespace hydromarket
