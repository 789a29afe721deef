#include "ccm/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "ccm/builtin_topologies.hpp"
#include "ccm/lnc.hpp"
#include "ccm/optimizer.hpp"
#include "ccm/simulator.hpp"

namespace ccm::cli {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct Options {
  std::string topology = "butterfly";
  std::string scenario;
  std::string cache_cost = "none";
  double cache_coeff = 1.0;
  std::string edge_cost = "fixture";
  double frame_size = 0.0;  // 0: fixture preset
  int rounds = 100;
  std::string epsilon = "preset";
  std::string payload_mode = "raw";
  double bits_per_unit = 1.0;
  gf::Elem modulus = 0;  // 0: smallest admissible prime
  opt::SolverConfig solver;
  int runs = 40;
  std::string out_dir = ".";
  std::string format = "csv";
  std::string placement = "optimized";
  std::vector<double> grid;
  std::vector<std::string> scenarios;
};

class StageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(std::string("[") + name + "] " + e.what());
  }
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Written to a sibling temporary first so readers never see a partial file.
void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// Rows of string cells rendered as CSV or as a JSON array of objects.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<json>> values;

  void add(std::vector<json> row) {
    std::vector<std::string> cells;
    for (const auto& v : row) {
      if (v.is_string()) cells.push_back(v.get<std::string>());
      else if (v.is_number_float()) cells.push_back(num(v.get<double>()));
      else cells.push_back(v.dump());
    }
    rows.push_back(std::move(cells));
    values.push_back(std::move(row));
  }

  std::string render(const std::string& format) const {
    if (format == "json") {
      json arr = json::array();
      for (const auto& row : values) {
        json obj = json::object();
        for (std::size_t c = 0; c < header.size(); ++c) obj[header[c]] = row[c];
        arr.push_back(std::move(obj));
      }
      return arr.dump(2) + "\n";
    }
    std::ostringstream os;
    for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
    os << "\n";
    for (const auto& row : rows) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
      os << "\n";
    }
    return os.str();
  }
};

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double resolve_frame_size(const Options& o) {
  if (o.frame_size > 0) return o.frame_size;
  if (auto b = preset_frame_size(o.topology)) return *b;
  throw std::invalid_argument("--B is required for a custom topology");
}

net::CostFamily cache_family(const Options& o) { return net::CostFamily::parse(o.cache_cost, o.cache_coeff); }

net::Network prepared_network(const Options& o, net::Scenario sc) {
  net::Network base = resolve_topology(o.topology);
  if (o.edge_cost == "linear") {
    // Same slope as the M/M/1 cost at zero load.
    std::vector<net::CostFamily> costs;
    for (const auto& e : base.edges()) costs.push_back(net::CostFamily::linear(1.0 / e.capacity));
    base = base.with_edge_costs(costs);
  } else if (o.edge_cost != "fixture") {
    throw std::invalid_argument("--edge-cost must be fixture or linear");
  }
  return net::apply_scenario(base, sc, cache_family(o));
}

// Relaxed-model instance: fractional B, epsilon = 1% of B by default.
net::Instance relaxed_instance(const Options& o, net::Network network, double b) {
  net::Instance inst{std::move(network)};
  inst.frame_size = b;
  inst.sparsity = o.epsilon == "preset" ? 0.01 * b : std::stod(o.epsilon);
  inst.rounds = o.rounds;
  if (o.payload_mode == "raw") inst.payload_mode = net::Instance::PayloadMode::raw;
  else if (o.payload_mode == "bits") inst.payload_mode = net::Instance::PayloadMode::bits;
  else throw std::invalid_argument("--payload-mode must be raw or bits");
  inst.bits_per_unit = o.bits_per_unit;
  auto b_sym = static_cast<std::size_t>(std::ceil(b));
  auto e_sym = static_cast<std::size_t>(std::ceil(inst.sparsity));
  inst.modulus = o.modulus ? o.modulus : gf::admissible_modulus(b_sym, e_sym);
  inst.validate();
  return inst;
}

// Symbol-level instance: integer B and eps, one rate unit per field symbol.
net::Instance symbol_instance(const Options& o, net::Network network, double b) {
  net::Instance inst{std::move(network)};
  auto b_sym = static_cast<std::size_t>(std::ceil(b));
  std::size_t e_sym = o.epsilon == "preset"
                          ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.01 * b_sym)))
                          : static_cast<std::size_t>(std::stoul(o.epsilon));
  inst.frame_size = static_cast<double>(b_sym);
  inst.sparsity = static_cast<double>(e_sym);
  inst.rounds = o.rounds;
  inst.modulus = o.modulus ? o.modulus : gf::admissible_modulus(b_sym, e_sym);
  inst.payload_mode = net::Instance::PayloadMode::bits;
  inst.bits_per_unit = gf::Field(inst.modulus).bits_per_symbol();
  inst.validate();
  return inst;
}

opt::SolverConfig solver_config(const Options& o) {
  opt::SolverConfig cfg = o.solver;
  cfg.validate();
  return cfg;
}

json state_json(const net::Network& network, const opt::FlowState& s, const opt::SolverConfig& cfg) {
  json edges = json::array();
  auto sigma = opt::coded_rates(s, cfg.norm_exponent);
  for (net::EdgeId e = 0; e < network.edge_count(); ++e) {
    json flows = json::array();
    for (std::size_t t = 0; t < s.terminals; ++t) flows.push_back(s.flow(t, e));
    edges.push_back({{"from", network.display_name(network.edge(e).from)},
                     {"to", network.display_name(network.edge(e).to)},
                     {"coded_rate", sigma[e]},
                     {"flows", flows}});
  }
  json nodes = json::array();
  for (net::NodeId i = 0; i < network.node_count(); ++i)
    nodes.push_back({{"node", network.display_name(i)},
                     {"cache_eligible", network.node(i).cache_eligible},
                     {"kappa", s.kappa[i]}});
  return {{"edges", edges}, {"nodes", nodes}};
}

json kkt_json(const opt::KktReport& k) {
  return {{"residual", k.residual()},
          {"stationarity_mu", k.stationarity_mu},
          {"stationarity_kappa", k.stationarity_kappa},
          {"conservation", k.conservation},
          {"feasibility", k.feasibility},
          {"slackness_mu", k.slackness_mu},
          {"slackness_kappa", k.slackness_kappa}};
}

std::string table_name(const std::string& stem, const Options& o) { return stem + "." + o.format; }

int cmd_solve(const Options& o, std::ostream& out) {
  net::Scenario sc = net::parse_scenario(o.scenario.empty() ? "no" : o.scenario);
  double b = resolve_frame_size(o);
  net::Instance inst = stage("setup", [&] { return relaxed_instance(o, prepared_network(o, sc), b); });
  opt::SolverConfig cfg = solver_config(o);
  opt::SolveResult res = stage("solve", [&] { return opt::solve(inst, cfg); });
  opt::Placement place = stage("round", [&] { return opt::round(res.state, cfg, inst); });

  Table trace;
  trace.header = {"iteration", "psi", "conservation", "stationarity", "kkt", "lyapunov", "step"};
  for (const auto& r : res.trace)
    trace.add({r.iteration, r.psi, r.conservation, r.stationarity, r.kkt, r.lyapunov, r.step});

  json summary = {{"command", "solve"},
                  {"topology", o.topology},
                  {"scenario", net::scenario_name(sc)},
                  {"cache_cost", cache_family(o).name()},
                  {"cache_coeff", o.cache_coeff},
                  {"B", b},
                  {"epsilon", inst.sparsity},
                  {"M", inst.rounds},
                  {"payload_mode", o.payload_mode},
                  {"psi", finite_or_null(res.psi)},
                  {"converged", res.converged},
                  {"iterations", res.iterations},
                  {"diagnostic", res.diagnostic},
                  {"kkt", kkt_json(res.final_kkt)},
                  {"state", state_json(inst.network, res.state, cfg)},
                  {"placement", {{"delta", place.delta}, {"dims", place.dims}}}};
  fs::path dir(o.out_dir);
  write_file(dir / table_name("trace", o), trace.render(o.format));
  write_file(dir / "state.json", summary.dump(2) + "\n");
  out << "psi " << num(res.psi) << " iterations " << res.iterations << " kkt " << num(res.final_kkt.residual())
      << (res.converged ? " converged" : " NOT converged") << "\n";
  if (!res.converged) out << "diagnostic: " << res.diagnostic << "\n";
  return res.converged ? 0 : 2;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  net::Scenario sc = net::parse_scenario(o.scenario.empty() ? "edge+peer" : o.scenario);
  double b = resolve_frame_size(o);
  net::Instance inst = stage("setup", [&] { return symbol_instance(o, prepared_network(o, sc), b); });
  const auto b_sym = static_cast<std::size_t>(inst.frame_size);
  const auto e_sym = static_cast<std::size_t>(inst.sparsity);
  opt::SolverConfig cfg = solver_config(o);

  std::vector<int> delta(inst.network.node_count(), 0);
  std::vector<std::size_t> dims;
  json solve_info = nullptr;
  bool converged = true;
  if (o.placement == "optimized") {
    opt::SolveResult res = stage("solve", [&] { return opt::solve(inst, cfg); });
    opt::Placement place = stage("round", [&] { return opt::round(res.state, cfg, inst); });
    delta = place.delta;
    dims = place.dims;
    converged = res.converged;
    solve_info = {{"psi", finite_or_null(res.psi)},
                  {"converged", res.converged},
                  {"iterations", res.iterations},
                  {"kkt", res.final_kkt.residual()}};
  } else if (o.placement == "routing") {
    // Every eligible node caches; dims come from fewest-hop path packing.
    for (net::NodeId i = 0; i < inst.network.node_count(); ++i) delta[i] = inst.network.node(i).cache_eligible;
    dims.assign(inst.network.edge_count(), 0);
  } else {
    throw std::invalid_argument("--placement must be optimized or routing");
  }
  bool repaired = false;
  if (!lnc::dims_feasible(inst.network, dims, b_sym)) {
    dims = stage("code", [&] { return lnc::repair_dims(inst.network, dims, b_sym); });
    repaired = true;
  }
  sim::Plan plan = stage("code", [&] { return sim::build_plan(inst, delta, dims, cfg.seed); });
  sim::FrameSequence frames =
      stage("frames", [&] { return sim::gen_frames(gf::Field(inst.modulus), b_sym, e_sym, inst.rounds, cfg.seed); });
  sim::RunResult run = stage("simulate", [&] { return sim::run(inst, plan, frames); });

  Table ledger;
  ledger.header = {"round", "kind", "item", "symbols", "bits", "cost"};
  for (const auto& r : run.ledger.rows) ledger.add({r.round, r.kind, r.item, r.symbols, r.bits, r.cost});

  std::vector<json> round_cost;
  for (double c : run.ledger.round_cost) round_cost.push_back(finite_or_null(c));
  std::vector<std::size_t> gamma(inst.network.node_count(), 0);
  for (net::NodeId i = 0; i < gamma.size(); ++i)
    if (plan.codecs[i]) gamma[i] = plan.codecs[i]->gamma;
  json summary = {{"command", "simulate"},
                  {"topology", o.topology},
                  {"scenario", net::scenario_name(sc)},
                  {"placement", o.placement},
                  {"cache_cost", cache_family(o).name()},
                  {"edge_cost", o.edge_cost},
                  {"B_requested", b},
                  {"B_symbols", b_sym},
                  {"epsilon", e_sym},
                  {"M", inst.rounds},
                  {"q", inst.modulus},
                  {"solve", solve_info},
                  {"delta", delta},
                  {"dims", dims},
                  {"dims_repaired", repaired},
                  {"gamma", gamma},
                  {"decode_exact", run.decode_exact},
                  {"matches_reference", run.matches_reference},
                  {"mismatch", run.mismatch},
                  {"psi_s", finite_or_null(run.ledger.realized)},
                  {"psi_star", finite_or_null(run.ledger.bound)},
                  {"round_cost", round_cost}};
  fs::path dir(o.out_dir);
  write_file(dir / table_name("ledger", o), ledger.render(o.format));
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  out << "decode_exact " << (run.decode_exact && run.matches_reference ? "true" : "false") << " psi_s "
      << num(run.ledger.realized) << " psi_star " << num(run.ledger.bound) << "\n";
  if (!(run.decode_exact && run.matches_reference)) return 1;
  return converged ? 0 : 2;
}

int cmd_place(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.runs < 1) throw std::invalid_argument("--runs must be >= 1");
  if (o.runs == 1) err << "warning: a single run reports one rounding-free kappa; the mean has no variance estimate\n";
  double b = resolve_frame_size(o);
  net::Network base = prepared_network(o, net::Scenario::no);
  net::Instance inst = stage("setup", [&] { return relaxed_instance(o, base, b); });
  opt::SolverConfig cfg = solver_config(o);
  auto lin = stage("solve", [&] {
    return opt::avg_kappa(inst, cfg, o.runs, net::CostFamily::linear(o.cache_coeff));
  });
  auto quad = stage("solve", [&] {
    return opt::avg_kappa(inst, cfg, o.runs, net::CostFamily::quadratic(o.cache_coeff));
  });

  Table table;
  table.header = {"node", "label", "linear_mean", "linear_std", "quadratic_mean", "quadratic_std"};
  for (net::NodeId i = 1; i < base.node_count(); ++i)
    table.add({i + 1, base.display_name(i), lin.mean[i], lin.stddev[i], quad.mean[i], quad.stddev[i]});
  fs::path dir(o.out_dir);
  write_file(dir / table_name("kappa", o), table.render(o.format));

  out << "node   linear  quadratic\n";
  for (net::NodeId i = 1; i < base.node_count(); ++i) {
    char line[96];
    std::snprintf(line, sizeof line, "%-6s %6.2f %10.2f\n", base.display_name(i).c_str(), lin.mean[i],
                  quad.mean[i]);
    out << line;
  }
  std::size_t bad = lin.nonconverged.size() + quad.nonconverged.size();
  if (bad) out << bad << " run(s) did not converge\n";
  return bad ? 2 : 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  double b0 = resolve_frame_size(o);
  std::vector<double> grid = o.grid;
  if (grid.empty())
    for (double f : {0.6, 0.7, 0.8, 0.9, 1.0}) grid.push_back(f * b0);
  std::vector<std::string> names = o.scenarios;
  if (names.empty()) names = {"no", "edge", "peer", "edge+peer"};
  opt::SolverConfig cfg = solver_config(o);

  Table table;
  table.header = {"B", "scenario", "psi", "converged", "iterations", "kkt"};
  bool all_converged = true;
  for (double b : grid) {
    for (const auto& name : names) {
      net::Scenario sc = net::parse_scenario(name);
      net::Instance inst = stage("setup", [&] { return relaxed_instance(o, prepared_network(o, sc), b); });
      opt::SolveResult res = stage("solve", [&] { return opt::solve(inst, cfg); });
      all_converged = all_converged && res.converged;
      table.add({b, net::scenario_name(sc), finite_or_null(res.psi), res.converged, res.iterations,
                 res.final_kkt.residual()});
      out << "B " << num(b) << " " << net::scenario_name(sc) << " psi " << num(res.psi)
          << (res.converged ? "" : " (not converged)") << "\n";
    }
  }
  write_file(fs::path(o.out_dir) / table_name("sweep", o), table.render(o.format));
  return all_converged ? 0 : 2;
}

void add_common(CLI::App& app, Options& o) {
  app.add_option("--topology", o.topology, "butterfly | service | cdn | path to a topology file")
      ->capture_default_str();
  app.add_option("--cache-cost", o.cache_cost, "cache cost family: none | linear | quadratic")
      ->capture_default_str();
  app.add_option("--cache-coeff", o.cache_coeff, "cache cost coefficient")->capture_default_str();
  app.add_option("--edge-cost", o.edge_cost, "fixture (M/M/1) | linear (slope 1/capacity)")->capture_default_str();
  app.add_option("--B", o.frame_size, "frame size; default: fixture preset (3.6 / 5 / 6)");
  app.add_option("--M", o.rounds, "number of rounds")->capture_default_str();
  app.add_option("--epsilon", o.epsilon, "sparsity, or 'preset' for 1% of B")->capture_default_str();
  app.add_option("--payload-mode", o.payload_mode, "update payload units: raw (2 eps) | bits")
      ->capture_default_str();
  app.add_option("--bits-per-unit", o.bits_per_unit, "bits per rate unit in bits mode")->capture_default_str();
  app.add_option("--q", o.modulus, "field modulus; default: smallest admissible prime");
  app.add_option("--n", o.solver.norm_exponent, "norm exponent (even)")->capture_default_str();
  app.add_option("--eta", o.solver.step, "step size")->capture_default_str();
  app.add_option("--max-iters", o.solver.max_iters, "iteration budget")->capture_default_str();
  app.add_option("--tol", o.solver.kkt_tol, "KKT residual tolerance")->capture_default_str();
  app.add_option("--gain-mu", o.solver.gain_mu)->capture_default_str();
  app.add_option("--gain-kappa", o.solver.gain_kappa)->capture_default_str();
  app.add_option("--gain-potential", o.solver.gain_potential)->capture_default_str();
  app.add_option("--gain-lambda", o.solver.gain_lambda, "0 = automatic")->capture_default_str();
  app.add_option("--gain-gamma", o.solver.gain_gamma, "0 = automatic")->capture_default_str();
  app.add_option("--augmentation", o.solver.augmentation)->capture_default_str();
  app.add_option("--trace-every", o.solver.trace_every)->capture_default_str();
  app.add_option("--seed", o.solver.seed)->capture_default_str();
  app.add_option("--out", o.out_dir, "output directory")->capture_default_str();
  app.add_option("--format", o.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
}

constexpr const char* kSchemas = R"(Output files (in --out):
  solve     trace.<fmt>   iteration,psi,conservation,stationarity,kkt,lyapunov,step
            state.json    psi, converged, iterations, kkt components, per-edge flows
                          and coded rate, per-node kappa, rounded placement
  simulate  ledger.<fmt>  round,kind(edge|cache),item,symbols,bits,cost
            summary.json  B_requested, B_symbols, epsilon, q, delta, dims, gamma,
                          decode_exact, matches_reference, psi_s, psi_star, round_cost
  place     kappa.<fmt>   node,label,linear_mean,linear_std,quadratic_mean,quadratic_std
  sweep     sweep.<fmt>   B,scenario,psi,converged,iterations,kkt
Exit status: 0 ok, 1 error, 2 not converged.)";

}  // namespace

std::optional<std::string> builtin_topology(std::string_view name) {
  if (name == "butterfly") return fixtures::butterfly;
  if (name == "service") return fixtures::service;
  if (name == "cdn") return fixtures::cdn;
  return std::nullopt;
}

std::optional<double> preset_frame_size(std::string_view name) {
  if (name == "butterfly") return 3.6;
  if (name == "service") return 5.0;
  if (name == "cdn") return 6.0;
  return std::nullopt;
}

net::Network resolve_topology(const std::string& spec) {
  if (auto text = builtin_topology(spec)) return net::load_topology(*text);
  return net::load_topology_file(spec);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cache-aided multicast: rate/cache optimization and coded simulation"};
  app.footer(kSchemas);
  app.require_subcommand(1);
  Options o;

  auto* solve = app.add_subcommand("solve", "solve the relaxed problem and write the convergence trace");
  add_common(*solve, o);
  solve->add_option("--scenario", o.scenario, "no | edge | peer | edge+peer | all (default no)");

  auto* simulate = app.add_subcommand("simulate", "solve, round, build codes and run M coded rounds");
  add_common(*simulate, o);
  simulate->add_option("--scenario", o.scenario, "no | edge | peer | edge+peer | all (default edge+peer)");
  simulate->add_option("--placement", o.placement, "optimized | routing")->capture_default_str();

  auto* place = app.add_subcommand("place", "mean relaxed cache variables with every node eligible");
  add_common(*place, o);
  place->add_option("--runs", o.runs, "random restarts per cost family")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "scenario comparison over a grid of B");
  add_common(*sweep, o);
  sweep->add_option("--B-grid", o.grid, "B values; default 0.6..1.0 times the preset")->delimiter(',');
  sweep->add_option("--scenarios", o.scenarios, "scenario list")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*solve) return cmd_solve(o, out);
    if (*simulate) return cmd_simulate(o, out);
    if (*place) return cmd_place(o, out, err);
    return cmd_sweep(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ccm::cli
