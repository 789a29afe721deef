#include "ccm/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace ccm::sim {

namespace {

double to_rate(const net::Instance& inst, std::size_t symbols) {
  return static_cast<double>(symbols) * inst.bits_per_symbol() / inst.bits_per_unit;
}

std::size_t cache_symbols(const net::Instance& inst, std::span<const std::size_t> dims, NodeId i) {
  const auto& net = inst.network;
  if (net.is_destination(i)) return static_cast<std::size_t>(inst.frame_size);
  std::size_t s = 0;
  for (EdgeId e : net.out_edges(i)) s += dims[e];
  return s;
}

std::string edge_name(const net::Network& net, EdgeId e) {
  return net.display_name(net.edge(e).from) + "->" + net.display_name(net.edge(e).to);
}

gf::Vec slice(const gf::Vec& v, std::size_t first, std::size_t count) {
  return {v.begin() + static_cast<std::ptrdiff_t>(first), v.begin() + static_cast<std::ptrdiff_t>(first + count)};
}

}  // namespace

FrameSequence gen_frames(const gf::Field& field, std::size_t frame_size, std::size_t sparsity, int rounds,
                         std::uint64_t seed) {
  if (sparsity > frame_size) throw std::invalid_argument("sparsity exceeds frame size");
  if (rounds < 1) throw std::invalid_argument("rounds must be >= 1");
  std::mt19937_64 rng(seed);
  FrameSequence seq;
  gf::Vec m(frame_size);
  for (auto& x : m) x = field.random(rng);
  seq.frames.push_back(m);
  std::vector<std::size_t> positions(frame_size);
  for (int r = 1; r < rounds; ++r) {
    for (std::size_t i = 0; i < frame_size; ++i) positions[i] = i;
    // Partial Fisher-Yates: the first eps entries are a uniform subset.
    for (std::size_t k = 0; k < sparsity; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, frame_size - 1);
      std::swap(positions[k], positions[pick(rng)]);
      m[positions[k]] = field.add(m[positions[k]], field.random_nonzero(rng));
    }
    seq.frames.push_back(m);
  }
  return seq;
}

std::size_t change_weight(const gf::Vec& a, const gf::Vec& b) {
  if (a.size() != b.size()) throw gf::DimensionError("frames differ in length");
  std::size_t w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w += a[i] != b[i];
  return w;
}

Plan build_plan(const net::Instance& inst, std::vector<int> delta, std::span<const std::size_t> dims,
                std::uint64_t seed) {
  const auto& net = inst.network;
  if (delta.size() != net.node_count()) throw std::invalid_argument("delta length does not match node count");
  if (inst.frame_size != std::floor(inst.frame_size) || inst.sparsity != std::floor(inst.sparsity))
    throw std::invalid_argument("simulation needs integer B and eps");
  const auto b = static_cast<std::size_t>(inst.frame_size);
  const auto eps = static_cast<std::size_t>(inst.sparsity);
  gf::Field field(inst.modulus);

  Plan plan;
  plan.code = lnc::build_code(net, dims, b, field, seed);
  plan.codecs.resize(net.node_count());
  for (NodeId i = 0; i < net.node_count(); ++i) {
    if (delta[i] != 0 && !net.node(i).cache_eligible)
      throw std::invalid_argument("node " + net.display_name(i) + " is not cache-eligible");
    if (delta[i] != 0) plan.codecs[i] = fnupd::build_codec(net, plan.code, i, eps, seed + 0x51ed27ULL * (i + 1));
  }
  plan.delta = std::move(delta);
  return plan;
}

double cost_bound(const net::Instance& inst, std::span<const int> delta, std::span<const std::size_t> dims) {
  const auto& net = inst.network;
  const double rest = inst.rounds - 1;
  const double update = to_rate(inst, static_cast<std::size_t>(2 * inst.sparsity));
  double first = 0.0, later = 0.0;
  for (EdgeId e = 0; e < net.edge_count(); ++e) {
    const auto& ed = net.edge(e);
    double full = ed.cost.eval(to_rate(inst, dims[e]));
    first += full;
    later += delta[ed.to] ? ed.cost.eval(update) : full;
  }
  for (NodeId i = 0; i < net.node_count(); ++i)
    if (delta[i]) later += net.node(i).cache_cost.eval(to_rate(inst, cache_symbols(inst, dims, i)));
  return first + rest * later;
}

RunResult run(const net::Instance& inst, const Plan& plan, const FrameSequence& frames) {
  const auto& net = inst.network;
  const auto& code = plan.code;
  const auto& f = code.field;
  if (static_cast<std::size_t>(inst.frame_size) != code.frame_size) throw std::invalid_argument("B differs from the code");
  if (frames.frames.size() != static_cast<std::size_t>(inst.rounds)) throw std::invalid_argument("frame count differs from M");

  RunResult res;
  res.decoded.assign(net.destination_count(), {});
  std::vector<gf::Vec> cache(net.node_count());

  for (int r = 0; r < inst.rounds; ++r) {
    const auto& m = frames.frames[r];
    lnc::Execution ref = lnc::propagate(net, code, m);
    std::vector<gf::Vec> y(net.node_count());
    double round_cost = 0.0;

    for (NodeId i : net.topological_order()) {
      bool cached = plan.delta[i] && r > 0;
      if (i == net.source()) {
        y[i] = gf::mat_vec(f, code.coding[i], m);
      } else if (!cached) {
        gf::Vec x;
        for (EdgeId e : net.in_edges(i)) {
          auto p = slice(y[net.edge(e).from], code.out_offset[e], code.dims[e]);
          x.insert(x.end(), p.begin(), p.end());
        }
        y[i] = gf::mat_vec(f, code.coding[i], x);
      } else {
        const auto& codec = *plan.codecs[i];
        gf::Vec syndrome(codec.gamma, 0);
        const auto& in = net.in_edges(i);
        for (std::size_t l = 0; l < in.size(); ++l) {
          EdgeId e = in[l];
          auto p = slice(y[net.edge(e).from], code.out_offset[e], code.dims[e]);
          syndrome = gf::vec_add(f, syndrome, fnupd::encode(codec, l, p));
        }
        y[i] = fnupd::decode(codec, syndrome, cache[i]);
      }
      if (plan.delta[i]) cache[i] = y[i];

      for (EdgeId e : net.in_edges(i)) {
        std::size_t sym = cached ? plan.codecs[i]->gamma : code.dims[e];
        double load = to_rate(inst, sym);
        double cost = net.edge(e).cost.eval(load);
        round_cost += cost;
        res.ledger.rows.push_back({r + 1, "edge", edge_name(net, e), sym, sym * inst.bits_per_symbol(), cost});
      }
      if (cached) {
        std::size_t sym = cache_symbols(inst, code.dims, i);
        double cost = net.node(i).cache_cost.eval(to_rate(inst, sym));
        round_cost += cost;
        res.ledger.rows.push_back({r + 1, "cache", net.display_name(i), sym, sym * inst.bits_per_symbol(), cost});
      }
      if (y[i] != ref.node_output[i] && res.matches_reference) {
        res.matches_reference = false;
        std::ostringstream os;
        os << "round " << r + 1 << ", node " << net.display_name(i) << ": output differs from the cache-free run";
        res.mismatch = os.str();
      }
    }
    for (NodeId t : net.destinations()) {
      if (y[t] != m) res.decode_exact = false;
      res.decoded[net.destination_index(t)].push_back(y[t]);
    }
    res.ledger.round_cost.push_back(round_cost);
    res.ledger.realized += round_cost;
  }
  res.ledger.bound = cost_bound(inst, plan.delta, code.dims);
  return res;
}

std::vector<ScenarioResult> compare_scenarios(const net::Instance& inst, const opt::SolverConfig& cfg,
                                              std::span<const net::Scenario> scenarios,
                                              const net::CostFamily& family) {
  std::vector<ScenarioResult> out;
  gf::Field field(inst.modulus);
  for (net::Scenario sc : scenarios) {
    net::Instance run_inst = inst;
    run_inst.network = net::apply_scenario(inst.network, sc, family);
    opt::SolveResult solved = opt::solve(run_inst, cfg);
    opt::Placement place = opt::round(solved.state, cfg, run_inst);
    auto dims = place.dims;
    const auto b = static_cast<std::size_t>(run_inst.frame_size);
    if (!lnc::dims_feasible(run_inst.network, dims, b)) dims = lnc::repair_dims(run_inst.network, dims, b);
    Plan plan = build_plan(run_inst, place.delta, dims, cfg.seed);
    FrameSequence frames =
        gen_frames(field, b, static_cast<std::size_t>(run_inst.sparsity), run_inst.rounds, cfg.seed);
    RunResult sim = run(run_inst, plan, frames);

    ScenarioResult r;
    r.scenario = sc;
    r.psi = solved.psi;
    r.converged = solved.converged;
    r.iterations = solved.iterations;
    r.realized = sim.ledger.realized;
    r.bound = sim.ledger.bound;
    r.decode_exact = sim.decode_exact && sim.matches_reference;
    r.delta = place.delta;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace ccm::sim
