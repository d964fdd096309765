#pragma once

// Physical and study data: plants, cascade topology, agents, horizon, demand.
// Units: MW for capacities and demand, hm3 for water, MWh/hm3 for production
// factors, currency/MWh for costs and prices.

#include <hydromarket/inflow.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace hydromarket {

class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ThermalPlant {
  std::string id;
  double cost = 0.0;
  double capacity = 0.0;
};

struct HydroPlant {
  std::string id;
  double production_factor = 1.0;
  double max_turbine = 0.0;
  double max_storage = 0.0;
  double max_generation = 0.0;
  double initial_storage = 0.0;
  std::optional<std::string> downstream;
};

// Generation in MW, broadcast over any dimension of size 1.
struct RenewablePlant {
  std::string id;
  int nt = 1, nb = 1, ns = 1;
  std::vector<double> values{0.0};

  double at(int t, int b, int s) const {
    const int ti = nt == 1 ? 0 : t, bi = nb == 1 ? 0 : b, si = ns == 1 ? 0 : s;
    return values.at((static_cast<std::size_t>(ti) * nb + bi) * ns + si);
  }
};

enum class AgentKind { PriceMaker, PriceTaker };

struct Agent {
  std::string id;
  AgentKind kind = AgentKind::PriceTaker;
  std::vector<std::string> thermal_ids, hydro_ids, renewable_ids;
};

struct Horizon {
  int stages = 1;
  std::vector<double> block_weights{1.0};
  double stage_hours = 1.0;  // MWh per MW for a block of weight 1
  int scenarios = 1;
  int openings = 1;
  std::vector<std::vector<double>> demand;  // [t][b], MW

  int blocks() const { return static_cast<int>(block_weights.size()); }
  double block_hours(int b) const { return block_weights[b] * stage_hours; }
};

struct SystemModel {
  std::string name;
  Horizon horizon;
  std::vector<ThermalPlant> thermals;
  std::vector<HydroPlant> hydros;
  std::vector<RenewablePlant> renewables;
  std::vector<Agent> agents;
  InflowModel inflow;
  std::optional<double> deficit_cost_override;

  // Derived by finalize().
  std::vector<int> downstream_index;          // -1 when none
  std::vector<std::vector<int>> upstream;     // M(i)

  double deficit_cost() const {
    if (deficit_cost_override) return *deficit_cost_override;
    double c = 0.0;
    for (const auto& g : thermals) c = std::max(c, g.cost);
    return thermals.empty() || c == 0.0 ? 1000.0 : 10.0 * c;
  }

  double peak_demand() const {
    double p = 0.0;
    for (const auto& row : horizon.demand)
      for (double d : row) p = std::max(p, d);
    return p;
  }

  double renewable_total(int t, int b, int s) const {
    double r = 0.0;
    for (const auto& p : renewables) r += p.at(t, b, s);
    return r;
  }

  int agent_index(const std::string& id) const {
    for (std::size_t a = 0; a < agents.size(); ++a)
      if (agents[a].id == id) return static_cast<int>(a);
    throw std::invalid_argument("unknown agent id '" + id + "'");
  }

  void finalize();
  void validate() const;
};

namespace detail {

template <class T>
int index_of(const std::vector<T>& v, const std::string& id) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i].id == id) return static_cast<int>(i);
  return -1;
}

}  // namespace detail

inline void SystemModel::finalize() {
  const int n = static_cast<int>(hydros.size());
  downstream_index.assign(n, -1);
  upstream.assign(n, {});
  for (int i = 0; i < n; ++i) {
    if (!hydros[i].downstream) continue;
    const int d = detail::index_of(hydros, *hydros[i].downstream);
    if (d < 0)
      throw ValidationError("hydro '" + hydros[i].id + "': unknown downstream plant '" + *hydros[i].downstream + "'");
    downstream_index[i] = d;
    upstream[d].push_back(i);
  }
  if (agents.empty()) {
    Agent a;
    a.id = "system";
    a.kind = AgentKind::PriceTaker;
    for (const auto& g : thermals) a.thermal_ids.push_back(g.id);
    for (const auto& h : hydros) a.hydro_ids.push_back(h.id);
    for (const auto& r : renewables) a.renewable_ids.push_back(r.id);
    agents.push_back(a);
  }
  if (inflow.hydros.empty() && n > 0) {
    // No inflow model given: dry system.
    HydroInflow dry;
    dry.residual.push_back(ResidualDist{ResidualKind::Normal, 0.0, 0.0, {}});
    inflow.hydros.assign(n, dry);
  }
}

inline void SystemModel::validate() const {
  const auto& h = horizon;
  if (h.stages < 1 || h.scenarios < 1 || h.openings < 1 || h.block_weights.empty())
    throw ValidationError("horizon: stages, blocks, scenarios and openings must all be >= 1");
  double wsum = 0.0;
  for (double w : h.block_weights) {
    if (!(w > 0.0)) throw ValidationError("horizon: block weights must be positive");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw ValidationError("horizon: block weights must sum to 1");
  if (!(h.stage_hours > 0.0)) throw ValidationError("horizon: stage_hours must be positive");
  if (static_cast<int>(h.demand.size()) != h.stages)
    throw ValidationError("demand: expected " + std::to_string(h.stages) + " stages");
  for (int t = 0; t < h.stages; ++t) {
    if (static_cast<int>(h.demand[t].size()) != h.blocks())
      throw ValidationError("demand: stage " + std::to_string(t) + " must have one value per block");
    for (double d : h.demand[t])
      if (!(d >= 0.0) || !std::isfinite(d)) throw ValidationError("demand: values must be finite and >= 0");
  }

  std::set<std::string> ids;
  auto unique = [&](const std::string& id) {
    if (id.empty()) throw ValidationError("plant with empty id");
    if (!ids.insert(id).second) throw ValidationError("duplicate plant id '" + id + "'");
  };
  for (const auto& g : thermals) {
    unique(g.id);
    if (!(g.cost >= 0.0)) throw ValidationError("thermal '" + g.id + "': cost must be >= 0");
    if (!(g.capacity >= 0.0)) throw ValidationError("thermal '" + g.id + "': capacity must be >= 0");
  }
  for (const auto& hp : hydros) {
    unique(hp.id);
    if (!(hp.production_factor >= 0 && hp.max_turbine >= 0 && hp.max_storage >= 0 && hp.max_generation >= 0))
      throw ValidationError("hydro '" + hp.id + "': bounds must be >= 0");
    if (!(hp.initial_storage >= 0 && hp.initial_storage <= hp.max_storage))
      throw ValidationError("hydro '" + hp.id + "': initial storage outside [0, max_storage]");
  }
  for (const auto& r : renewables) {
    unique(r.id);
    if ((r.nt != 1 && r.nt != h.stages) || (r.nb != 1 && r.nb != h.blocks()) || (r.ns != 1 && r.ns != h.scenarios))
      throw ValidationError("renewable '" + r.id + "': generation dimensions do not match the horizon");
    for (double v : r.values)
      if (!(v >= 0.0)) throw ValidationError("renewable '" + r.id + "': generation must be >= 0");
  }

  // Cascade must be a forest.
  const int n = static_cast<int>(hydros.size());
  for (int i = 0; i < n; ++i) {
    int cur = i;
    for (int steps = 0; cur >= 0; ++steps) {
      if (steps > n) throw ValidationError("cascade cycle through hydro '" + hydros[i].id + "'");
      cur = downstream_index.empty() ? -1 : downstream_index[cur];
    }
  }

  // Ownership partition.
  std::map<std::string, int> owner;
  std::set<std::string> agent_ids;
  for (const auto& a : agents) {
    if (!agent_ids.insert(a.id).second) throw ValidationError("duplicate agent id '" + a.id + "'");
    auto claim = [&](const std::string& pid, bool exists) {
      if (!exists) throw ValidationError("agent '" + a.id + "': unknown plant '" + pid + "'");
      if (++owner[pid] > 1) throw ValidationError("ownership partition: plant '" + pid + "' owned twice");
    };
    for (const auto& p : a.thermal_ids) claim(p, detail::index_of(thermals, p) >= 0);
    for (const auto& p : a.hydro_ids) claim(p, detail::index_of(hydros, p) >= 0);
    for (const auto& p : a.renewable_ids) claim(p, detail::index_of(renewables, p) >= 0);
  }
  for (const auto& id : ids)
    if (!owner.count(id)) throw ValidationError("ownership partition: plant '" + id + "' has no owner");

  if (deficit_cost_override && !(*deficit_cost_override > 0.0))
    throw ValidationError("horizon: deficit_cost must be positive");
  try {
    inflow.validate(n);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(e.what());
  }
}

/// RFC-4180 quoting for a CSV field.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

// Agent views ----------------------------------------------------------------

struct AgentView {
  int agent = -1;
  std::vector<int> thermals, hydros, renewables;                       // G_i, H_i, R_i
  std::vector<int> other_thermals, other_hydros, other_renewables;     // complements

  // Maximum deliverable power (MW) in (t, b, s): thermal + turbine + renewable capacity.
  double max_generation(const SystemModel& sys, int t, int b, int s) const {
    double e = 0.0;
    for (int j : thermals) e += sys.thermals[j].capacity;
    for (int i : hydros) e += sys.hydros[i].max_generation;
    for (int r : renewables) e += sys.renewables[r].at(t, b, s);
    return e;
  }
};

inline AgentView agent_partition(const SystemModel& sys, int agent) {
  if (agent < 0 || agent >= static_cast<int>(sys.agents.size()))
    throw std::invalid_argument("unknown agent index " + std::to_string(agent));
  const auto& a = sys.agents[agent];
  AgentView v;
  v.agent = agent;
  auto split = [](const auto& plants, const std::vector<std::string>& owned, std::vector<int>& mine,
                  std::vector<int>& others) {
    for (std::size_t i = 0; i < plants.size(); ++i) {
      if (std::find(owned.begin(), owned.end(), plants[i].id) != owned.end()) mine.push_back(static_cast<int>(i));
      else others.push_back(static_cast<int>(i));
    }
  };
  split(sys.thermals, a.thermal_ids, v.thermals, v.other_thermals);
  split(sys.hydros, a.hydro_ids, v.hydros, v.other_hydros);
  split(sys.renewables, a.renewable_ids, v.renewables, v.other_renewables);
  return v;
}

inline AgentView agent_partition(const SystemModel& sys, const std::string& agent_id) {
  return agent_partition(sys, sys.agent_index(agent_id));
}

// Whole-system view (centralized operator).
inline AgentView system_view(const SystemModel& sys) {
  AgentView v;
  for (std::size_t j = 0; j < sys.thermals.size(); ++j) v.thermals.push_back(static_cast<int>(j));
  for (std::size_t i = 0; i < sys.hydros.size(); ++i) v.hydros.push_back(static_cast<int>(i));
  for (std::size_t r = 0; r < sys.renewables.size(); ++r) v.renewables.push_back(static_cast<int>(r));
  return v;
}

// JSON -----------------------------------------------------------------------

inline RenewablePlant renewable_from_json(const nlohmann::json& j) {
  RenewablePlant r;
  r.id = j.at("id").get<std::string>();
  const auto& g = j.at("generation");
  if (g.is_number()) {
    r.values = {g.get<double>()};
  } else if (g.is_array() && (g.empty() || g.front().is_number())) {
    throw ValidationError("renewable '" + r.id + "': generation must be a number, [t][b] or [t][b][s]");
  } else if (g.front().front().is_number()) {
    r.nt = static_cast<int>(g.size());
    r.nb = static_cast<int>(g.front().size());
    r.values.clear();
    for (const auto& row : g) {
      if (static_cast<int>(row.size()) != r.nb) throw ValidationError("renewable '" + r.id + "': ragged generation");
      for (const auto& v : row) r.values.push_back(v.get<double>());
    }
  } else {
    r.nt = static_cast<int>(g.size());
    r.nb = static_cast<int>(g.front().size());
    r.ns = static_cast<int>(g.front().front().size());
    r.values.clear();
    for (const auto& row : g) {
      if (static_cast<int>(row.size()) != r.nb) throw ValidationError("renewable '" + r.id + "': ragged generation");
      for (const auto& cell : row) {
        if (static_cast<int>(cell.size()) != r.ns)
          throw ValidationError("renewable '" + r.id + "': ragged generation");
        for (const auto& v : cell) r.values.push_back(v.get<double>());
      }
    }
  }
  return r;
}

inline nlohmann::json renewable_to_json(const RenewablePlant& r) {
  nlohmann::json j;
  j["id"] = r.id;
  if (r.nt == 1 && r.nb == 1 && r.ns == 1) {
    j["generation"] = r.values[0];
    return j;
  }
  nlohmann::json g = nlohmann::json::array();
  for (int t = 0; t < r.nt; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (int b = 0; b < r.nb; ++b) {
      nlohmann::json cell = nlohmann::json::array();
      for (int s = 0; s < r.ns; ++s) cell.push_back(r.values[(static_cast<std::size_t>(t) * r.nb + b) * r.ns + s]);
      row.push_back(cell);
    }
    g.push_back(row);
  }
  j["generation"] = g;
  return j;
}

inline SystemModel system_from_json(const nlohmann::json& j) {
  SystemModel sys;
  sys.name = j.value("name", "");
  const auto& hz = j.at("horizon");
  sys.horizon.stages = hz.at("stages").get<int>();
  if (hz.contains("blocks")) {
    const auto& b = hz.at("blocks");
    if (b.is_number()) sys.horizon.block_weights.assign(b.get<int>(), 1.0 / b.get<int>());
    else sys.horizon.block_weights = b.get<std::vector<double>>();
  }
  sys.horizon.stage_hours = hz.value("stage_hours", 1.0);
  sys.horizon.scenarios = hz.value("scenarios", 1);
  sys.horizon.openings = hz.value("openings", 1);
  if (hz.contains("deficit_cost")) sys.deficit_cost_override = hz.at("deficit_cost").get<double>();

  const auto& d = j.at("demand");
  if (d.is_number()) {
    sys.horizon.demand.assign(sys.horizon.stages, std::vector<double>(sys.horizon.blocks(), d.get<double>()));
  } else {
    for (const auto& row : d) {
      if (row.is_number()) sys.horizon.demand.push_back(std::vector<double>(sys.horizon.blocks(), row.get<double>()));
      else sys.horizon.demand.push_back(row.get<std::vector<double>>());
    }
  }

  const auto plants = j.value("plants", nlohmann::json::object());
  for (const auto& g : plants.value("thermals", nlohmann::json::array()))
    sys.thermals.push_back({g.at("id").get<std::string>(), g.at("cost").get<double>(), g.at("capacity").get<double>()});
  for (const auto& h : plants.value("hydros", nlohmann::json::array())) {
    HydroPlant p;
    p.id = h.at("id").get<std::string>();
    p.production_factor = h.value("production_factor", 1.0);
    p.max_turbine = h.at("max_turbine").get<double>();
    p.max_storage = h.at("max_storage").get<double>();
    p.max_generation = h.at("max_generation").get<double>();
    p.initial_storage = h.value("initial_storage", 0.0);
    if (h.contains("downstream") && !h.at("downstream").is_null()) p.downstream = h.at("downstream").get<std::string>();
    sys.hydros.push_back(p);
  }
  for (const auto& r : plants.value("renewables", nlohmann::json::array())) sys.renewables.push_back(renewable_from_json(r));

  for (const auto& a : j.value("agents", nlohmann::json::array())) {
    Agent ag;
    ag.id = a.at("id").is_string() ? a.at("id").get<std::string>() : std::to_string(a.at("id").get<long>());
    const std::string kind = a.value("kind", "price_taker");
    if (kind == "price_maker") ag.kind = AgentKind::PriceMaker;
    else if (kind == "price_taker") ag.kind = AgentKind::PriceTaker;
    else throw ValidationError("agent '" + ag.id + "': unknown kind '" + kind + "'");
    ag.thermal_ids = a.value("thermals", std::vector<std::string>{});
    ag.hydro_ids = a.value("hydros", std::vector<std::string>{});
    ag.renewable_ids = a.value("renewables", std::vector<std::string>{});
    sys.agents.push_back(ag);
  }

  if (j.contains("inflow_model")) {
    const auto& im = j.at("inflow_model");
    const auto& entries = im.contains("hydros") ? im.at("hydros") : im;
    HydroInflow dry;
    dry.residual.push_back(ResidualDist{ResidualKind::Normal, 0.0, 0.0, {}});
    sys.inflow.hydros.assign(sys.hydros.size(), dry);
    for (const auto& e : entries) {
      const std::string hid = e.at("hydro").get<std::string>();
      const int idx = detail::index_of(sys.hydros, hid);
      if (idx < 0) throw ValidationError("inflow_model: unknown hydro '" + hid + "'");
      sys.inflow.hydros[idx] = hydro_inflow_from_json(e);
    }
  }
  sys.finalize();
  sys.validate();
  return sys;
}

inline nlohmann::json system_to_json(const SystemModel& sys) {
  nlohmann::json j;
  if (!sys.name.empty()) j["name"] = sys.name;
  auto& hz = j["horizon"];
  hz["stages"] = sys.horizon.stages;
  hz["blocks"] = sys.horizon.block_weights;
  hz["stage_hours"] = sys.horizon.stage_hours;
  hz["scenarios"] = sys.horizon.scenarios;
  hz["openings"] = sys.horizon.openings;
  if (sys.deficit_cost_override) hz["deficit_cost"] = *sys.deficit_cost_override;
  j["demand"] = sys.horizon.demand;
  auto& pl = j["plants"];
  pl["thermals"] = nlohmann::json::array();
  for (const auto& g : sys.thermals) pl["thermals"].push_back({{"id", g.id}, {"cost", g.cost}, {"capacity", g.capacity}});
  pl["hydros"] = nlohmann::json::array();
  for (const auto& h : sys.hydros) {
    nlohmann::json o{{"id", h.id},
                     {"production_factor", h.production_factor},
                     {"max_turbine", h.max_turbine},
                     {"max_storage", h.max_storage},
                     {"max_generation", h.max_generation},
                     {"initial_storage", h.initial_storage}};
    if (h.downstream) o["downstream"] = *h.downstream;
    pl["hydros"].push_back(o);
  }
  pl["renewables"] = nlohmann::json::array();
  for (const auto& r : sys.renewables) pl["renewables"].push_back(renewable_to_json(r));
  j["agents"] = nlohmann::json::array();
  for (const auto& a : sys.agents)
    j["agents"].push_back({{"id", a.id},
                           {"kind", a.kind == AgentKind::PriceMaker ? "price_maker" : "price_taker"},
                           {"thermals", a.thermal_ids},
                           {"hydros", a.hydro_ids},
                           {"renewables", a.renewable_ids}});
  nlohmann::json inflows = nlohmann::json::array();
  for (std::size_t i = 0; i < sys.hydros.size() && i < sys.inflow.hydros.size(); ++i) {
    auto e = hydro_inflow_to_json(sys.inflow.hydros[i]);
    e["hydro"] = sys.hydros[i].id;
    inflows.push_back(e);
  }
  j["inflow_model"] = {{"hydros", inflows}};
  return j;
}

namespace detail {

inline std::string line_context(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t k = 0; k < byte && k < text.size(); ++k) {
    if (text[k] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline SystemModel parse_system(const std::string& text, const std::string& origin = "<input>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(origin + ": parse error at " + detail::line_context(text, e.byte) + ": " + e.what());
  }
  try {
    return system_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(origin + ": schema error: " + e.what());
  }
}

inline SystemModel load_system(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open system file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_system(ss.str(), path);
}

inline void save_system(const SystemModel& sys, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write system file '" + path + "'");
  out << system_to_json(sys).dump(2) << '\n';
}

}  // namespace hydromarket
