// hydromarket: runs a study pipeline and writes CSV tables plus manifest.json.
//
// Exit codes: 0 success, 2 finished without convergence, 1 error.

#include <hydromarket/cases.hpp>
#include <hydromarket/dispatch.hpp>
#include <hydromarket/equilibrium.hpp>
#include <hydromarket/optbid.hpp>
#include <hydromarket/policy.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#ifndef HM_VERSION
#define HM_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hydromarket;

namespace {

constexpr int kOk = 0;
constexpr int kError = 1;
constexpr int kNotConverged = 2;

const std::vector<std::string> kPipelines{"dispatch", "maxrev", "optbid", "equilibrium", "gen-case"};

struct Study {
  json config = json::object();  // resolved, as recorded in the manifest
  fs::path base_dir = ".";       // relative paths in the config resolve here
  std::string pipeline;
  std::string out = "results";
  std::string profile;
  std::uint64_t seed = 1;
  int workers = 1;
};

std::string now_utc() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

json read_json_file(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + what + " '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::parse_error& e) {
    throw std::runtime_error(what + " '" + path.string() + "': " + detail::line_context(ss.str(), e.byte) + ": " + e.what());
  }
}

template <class T>
T positive(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const T v = j.at(key).get<T>();
  if (!(v > 0)) throw std::invalid_argument(std::string("config: '") + key + "' must be positive");
  return v;
}

template <class T>
T nonnegative(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const T v = j.at(key).get<T>();
  if (v < 0) throw std::invalid_argument(std::string("config: '") + key + "' must not be negative");
  return v;
}

SystemModel load_study_system(const Study& st) {
  SystemModel sys;
  const auto& c = st.config;
  if (c.contains("system")) {
    const auto& s = c.at("system");
    if (s.is_string()) sys = load_system((st.base_dir / s.get<std::string>()).string());
    else sys = system_from_json(s);
  } else if (!st.profile.empty()) {
    sys = cases::by_profile(st.profile, st.seed);
  } else {
    throw std::invalid_argument("config: no 'system' given (and no --profile)");
  }
  sys.horizon.scenarios = positive(c, "scenarios", sys.horizon.scenarios);
  sys.horizon.openings = positive(c, "openings", sys.horizon.openings);
  if (c.contains("deficit_cost")) sys.deficit_cost_override = positive(c, "deficit_cost", 0.0);
  sys.validate();
  return sys;
}

SddpOptions sddp_options(const Study& st) {
  SddpOptions o;
  const json s = st.config.value("sddp", json::object());
  o.max_iterations = positive(s, "max_iterations", o.max_iterations);
  o.min_iterations = positive(s, "min_iterations", o.min_iterations);
  o.z = positive(s, "z", o.z);
  o.tree_mode = s.value("tree_mode", o.tree_mode);
  o.all_cuts_below = nonnegative(s, "all_cuts_below", o.all_cuts_below);
  o.time_limit_s = nonnegative(s, "time_limit_s", o.time_limit_s);
  o.seed = st.seed;
  o.workers = st.workers;
  return o;
}

OptBidOptions optbid_options(const Study& st, OptBidOptions o, const SystemModel& sys) {
  const json b = st.config.value("optbid", json::object());
  if (b.contains("settlement")) {
    const auto s = b.at("settlement").get<std::string>();
    if (s == "as-bid") o.settlement = Settlement::AsBid;
    else if (s == "at-spot") o.settlement = Settlement::AtSpot;
    else throw std::invalid_argument("config: optbid.settlement must be 'as-bid' or 'at-spot'");
  }
  o.tie_break = nonnegative(b, "tie_break", o.tie_break);
  o.max_spot_scenarios = nonnegative(b, "max_spot_scenarios", o.max_spot_scenarios);
  o.quantiles = positive(b, "quantiles", o.quantiles);
  o.boxes = positive(b, "boxes", o.boxes);
  if (b.contains("prices")) {
    // One ladder for every block, or one per block.
    const auto& p = b.at("prices");
    PriceGrid g;
    if (!p.empty() && p.front().is_array()) g.prices = p.get<std::vector<std::vector<double>>>();
    else g.prices.assign(sys.horizon.blocks(), p.get<std::vector<double>>());
    g.validate();
    if (g.blocks() != sys.horizon.blocks()) throw std::invalid_argument("config: optbid.prices has the wrong block count");
    o.grid = g;
  }
  return o;
}

std::vector<int> selected_agents(const Study& st, const SystemModel& sys) {
  std::vector<int> out;
  if (st.config.contains("agent")) {
    out.push_back(sys.agent_index(st.config.at("agent").get<std::string>()));
  } else {
    for (int a = 0; a < static_cast<int>(sys.agents.size()); ++a) out.push_back(a);
  }
  return out;
}

struct Outcome {
  bool converged = true;
  std::vector<std::string> files;
  json details = json::object();
};

DispatchResult centralized(const Study& st, const SystemModel& sys, const ScenarioSet& sc) {
  DispatchOptions d;
  d.sddp = sddp_options(st);
  d.out_of_sample = st.config.value("out_of_sample", false);
  d.out_of_sample_seed = st.seed + 1;
  std::cerr << "centralized dispatch..." << std::endl;
  return run_centralized(sys, sc, d);
}

void write_sddp_history(std::ofstream& f, const std::string& agent, const std::vector<IterationRecord>& h) {
  for (const auto& r : h)
    f << csv_field(agent) << ',' << r.iteration << ',' << r.bound << ',' << r.estimate << ',' << r.std_error << ','
      << r.cuts << '\n';
}

Outcome run_dispatch(const Study& st, const SystemModel& sys, const ScenarioSet& sc) {
  const auto r = centralized(st, sys, sc);
  write_dispatch_csv(r, sys, st.out);
  Outcome o;
  o.converged = r.converged;
  o.files = {"spot.csv", "storage.csv", "generation.csv", "convergence_sddp.csv"};
  o.details = {{"expected_cost", r.expected_cost()},
               {"lower_bound", r.report.lower_bound},
               {"iterations", r.report.iterations},
               {"diagnostic", r.report.diagnostic}};
  return o;
}

struct AgentRuns {
  DispatchResult cd;
  MarkovChain chain;
  SpotScenarios spots;
};

AgentRuns prepare_agents(const Study& st, const SystemModel& sys, const ScenarioSet& sc) {
  AgentRuns r;
  r.cd = centralized(st, sys, sc);
  r.spots = r.cd.spot_vectors();
  r.chain = build_markov_chain(r.spots, sys.horizon.block_weights, positive(st.config, "clusters", 3), sc.openings,
                               st.seed);
  write_chain_csv(r.chain, st.out + "/clusters.csv", st.out + "/transitions.csv");
  return r;
}

Outcome run_maxrev(const Study& st, const SystemModel& sys, const ScenarioSet& sc, bool bids) {
  const auto prep = prepare_agents(st, sys, sc);
  const SddpContext ctx{sys.inflow, sc};
  const auto sddp = sddp_options(st);
  const auto obo = optbid_options(st, OptBidOptions{}, sys);
  Outcome o;
  o.files = {"clusters.csv", "transitions.csv", "fbf_cuts.csv", "maxrev.csv", "convergence_sddp.csv"};
  std::ofstream cuts(st.out + "/fbf_cuts.csv"), sim(st.out + "/maxrev.csv"), conv(st.out + "/convergence_sddp.csv");
  if (!cuts || !sim || !conv) throw std::runtime_error("cannot write into '" + st.out + "'");
  sim.precision(12);
  conv.precision(12);
  sim << "agent,stage,block,scenario,delivered_mw\n";
  conv << "agent,iteration,bound,estimate,std_error,cuts\n";
  std::vector<AgentBids> all_bids;
  bool first = true;
  for (int a : selected_agents(st, sys)) {
    const auto& id = sys.agents[a].id;
    std::cerr << "MaxRev for agent " << id << "..." << std::endl;
    MaxRevPolicy policy(sys, a, prep.chain, prep.spots);
    const auto pr = run_policy(policy, sys, ctx, sddp);
    o.converged = o.converged && pr.report.converged;
    o.details["agents"][id] = {{"expected_benefit", pr.simulation.expected_value()},
                               {"upper_bound", pr.report.lower_bound},
                               {"iterations", pr.report.iterations},
                               {"converged", pr.report.converged}};
    write_cuts_csv(cuts, pr.fbf, a, first);
    first = false;
    write_sddp_history(conv, id, pr.history);
    const auto& s = pr.simulation;
    for (int t = 0; t < s.stages; ++t)
      for (int b = 0; b < s.blocks; ++b)
        for (int k = 0; k < s.scenarios; ++k)
          sim << csv_field(id) << ',' << t << ',' << b << ',' << k << ','
              << s.delta_mw[(static_cast<std::size_t>(t) * s.blocks + b) * s.scenarios + k] << '\n';
    if (bids) {
      std::cerr << "OptBid for agent " << id << "..." << std::endl;
      all_bids.push_back(simulate_bids(policy, ctx, prep.spots, pr.fbf, obo, st.workers));
    }
  }
  if (bids) {
    std::vector<Bid> flat;
    for (const auto& ab : all_bids) flat.insert(flat.end(), ab.bids.begin(), ab.bids.end());
    write_bids_csv(st.out + "/bids.csv", flat);
    o.files.push_back("bids.csv");
  }
  return o;
}

Outcome run_eq(const Study& st, const SystemModel& sys, const ScenarioSet& sc) {
  EquilibriumOptions opt;
  opt.sddp = sddp_options(st);
  opt.optbid = optbid_options(st, opt.optbid, sys);
  opt.clusters = positive(st.config, "clusters", opt.clusters);
  opt.seed = st.seed;
  opt.workers = st.workers;
  const json e = st.config.value("equilibrium", json::object());
  opt.max_rounds = positive(e, "max_rounds", opt.max_rounds);
  if (e.contains("tol_bid")) opt.tol_bid = positive(e, "tol_bid", 0.0);
  opt.tol_spot = positive(e, "tol_spot", opt.tol_spot);
  opt.stages_per_year = positive(e, "stages_per_year", opt.stages_per_year);
  opt.recluster_every = nonnegative(e, "recluster_every", opt.recluster_every);
  if (e.contains("order"))
    for (const auto& id : e.at("order")) opt.order.push_back(sys.agent_index(id.get<std::string>()));

  std::cerr << "equilibrium: centralized dispatch and initialization..." << std::endl;
  const auto rep = run_equilibrium(sys, sc, opt, [&](const RoundRecord& r) {
    if (r.round == 0) {
      std::cerr << "initialized (" << r.seconds << " s)" << std::endl;
      return;
    }
    std::cerr << "round " << r.round << " agent " << sys.agents[r.agent].id << ": bid change " << r.bid_change
              << ", spot change " << r.spot_change << " (" << r.seconds << " s)"
              << (r.failed ? " FAILED: " + r.diagnostic : "") << std::endl;
  });
  write_equilibrium_csv(rep, sys, st.out);
  write_chain_csv(rep.state.chain, st.out + "/clusters.csv", st.out + "/transitions.csv");
  Outcome o;
  o.converged = rep.converged;
  o.files = {"convergence.csv", "spot_cd_vs_ne.csv", "revenue_by_agent.csv", "bids.csv", "clusters.csv",
             "transitions.csv"};
  o.details = {{"rounds", rep.rounds}, {"tol_bid", rep.tol_bid}, {"tol_spot", rep.tol_spot}};
  for (std::size_t a = 0; a < sys.agents.size(); ++a)
    o.details["revenue"][sys.agents[a].id] = {{"ne", rep.ne_revenue[a]}, {"cd", rep.cd_revenue[a]}};
  return o;
}

Outcome run_gen_case(const Study& st) {
  if (st.profile.empty()) throw std::invalid_argument("gen-case needs --profile (toy, duopoly or panama-like)");
  SystemModel sys;
  if (st.profile == "panama-like") {
    const json g = st.config.value("gen_case", json::object());
    sys = cases::panama_like(st.seed, positive(g, "stages", 48), positive(g, "scenarios", 20),
                             positive(g, "openings", 10));
  } else {
    sys = cases::by_profile(st.profile, st.seed);
  }
  save_system(sys, st.out + "/system.json");
  Outcome o;
  o.files = {"system.json"};
  double thermal = 0.0, hydro = 0.0;
  for (const auto& g : sys.thermals) thermal += g.capacity;
  for (const auto& h : sys.hydros) hydro += h.max_generation;
  o.details = {{"thermals", sys.thermals.size()}, {"thermal_mw", thermal},     {"hydros", sys.hydros.size()},
               {"hydro_mw", hydro},               {"stages", sys.horizon.stages}, {"agents", sys.agents.size()}};
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hydrothermal market simulator: centralized dispatch, agent recursions, bidding and equilibrium"};
  std::string config_path, pipeline, out, profile;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  app.add_option("--config", config_path, "Study configuration (JSON)")->envname("HYDROMARKET_CONFIG");
  app.add_option("--pipeline", pipeline, "dispatch | maxrev | optbid | equilibrium | gen-case")
      ->envname("HYDROMARKET_PIPELINE")
      ->check(CLI::IsMember(kPipelines));
  app.add_option("--out", out, "Output directory")->envname("HYDROMARKET_OUT");
  app.add_option("--seed", seed, "Base random seed")->envname("HYDROMARKET_SEED");
  app.add_option("--workers", workers, "Worker threads")->envname("HYDROMARKET_WORKERS")->check(CLI::PositiveNumber);
  app.add_option("--profile", profile, "Built-in case: toy | duopoly | panama-like")->envname("HYDROMARKET_PROFILE");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kError;
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::string started = now_utc();
  Study st;
  int code = kOk;
  bool out_ready = false;
  Outcome result;
  try {
    if (!config_path.empty()) {
      st.config = read_json_file(config_path, "config file");
      if (!st.config.is_object()) throw std::invalid_argument("config file '" + config_path + "' must hold an object");
      st.base_dir = fs::path(config_path).parent_path();
      if (st.base_dir.empty()) st.base_dir = ".";
    }
    auto& c = st.config;
    // Flags and environment override the file.
    if (!pipeline.empty()) c["pipeline"] = pipeline;
    if (!out.empty()) c["out"] = out;
    if (seed) c["seed"] = *seed;
    if (workers) c["workers"] = *workers;
    if (!profile.empty()) c["profile"] = profile;
    st.pipeline = c.value("pipeline", "");
    if (st.pipeline.empty()) throw std::invalid_argument("no pipeline given (--pipeline or \"pipeline\" in the config)");
    if (std::find(kPipelines.begin(), kPipelines.end(), st.pipeline) == kPipelines.end())
      throw std::invalid_argument("unknown pipeline '" + st.pipeline + "'");
    st.out = c.value("out", st.out);
    st.profile = c.value("profile", "");
    st.seed = c.value("seed", std::uint64_t{1});
    st.workers = positive(c, "workers", 1);
    fs::create_directories(st.out);
    out_ready = true;

    if (st.pipeline == "gen-case") {
      result = run_gen_case(st);
    } else {
      const auto sys = load_study_system(st);
      // The manifest's config carries the system inline, so it reruns on its own.
      if (c.contains("system") && c.at("system").is_string()) c["system_source"] = c.at("system");
      c["system"] = system_to_json(sys);
      const auto sc = generate_scenarios(sys.inflow, sys.horizon.stages, sys.horizon.scenarios, sys.horizon.openings,
                                         st.seed);
      if (st.pipeline == "dispatch") result = run_dispatch(st, sys, sc);
      else if (st.pipeline == "maxrev") result = run_maxrev(st, sys, sc, false);
      else if (st.pipeline == "optbid") result = run_maxrev(st, sys, sc, true);
      else result = run_eq(st, sys, sc);
    }
    code = result.converged ? kOk : kNotConverged;
    if (!result.converged) std::cerr << "warning: finished without convergence" << std::endl;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    code = kError;
  }

  if (out_ready) {
    json m;
    m["tool"] = "hydromarket";
    m["version"] = HM_VERSION;
    m["compiler"] = __VERSION__;
    m["pipeline"] = st.pipeline;
    m["config_path"] = config_path;
    m["config"] = st.config;
    m["seeds"] = {{"scenarios", st.seed}, {"sddp", st.seed}, {"clusters", st.seed}, {"out_of_sample", st.seed + 1}};
    m["workers"] = st.workers;
    m["started_at"] = started;
    m["wall_time_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m["exit_code"] = code;
    m["converged"] = result.converged;
    m["outputs"] = result.files;
    m["results"] = result.details;
    std::ofstream f(st.out + "/manifest.json");
    if (f) f << m.dump(2) << '\n';
  }
  return code;
}
