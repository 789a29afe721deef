#include "ccm/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <memory>
#include <queue>
#include <set>
#include <sstream>

namespace ccm::net {

CostFamily CostFamily::parse(std::string_view name, double param) {
  if (name == "zero" || name == "none") return zero();
  if (param < 0) throw std::invalid_argument("cost family parameter must be non-negative");
  if (name == "linear") return linear(param);
  if (name == "quadratic") return quadratic(param);
  if (name == "mm1") {
    if (param <= 0) throw std::invalid_argument("mm1 capacity must be positive");
    return mm1(param);
  }
  throw std::invalid_argument("unknown cost family '" + std::string(name) + "'");
}

std::string CostFamily::name() const {
  switch (kind_) {
    case Kind::zero: return "zero";
    case Kind::linear: return "linear";
    case Kind::quadratic: return "quadratic";
    case Kind::mm1: return "mm1";
  }
  return "zero";
}

double CostFamily::eval(double s) const {
  if (s < 0) throw std::domain_error("negative load");
  switch (kind_) {
    case Kind::zero: return 0.0;
    case Kind::linear: return param_ * s;
    case Kind::quadratic: return param_ * s * s;
    case Kind::mm1: return s >= param_ ? kInfeasible : s / (param_ - s);
  }
  return 0.0;
}

double CostFamily::deriv(double s) const {
  if (s < 0) throw std::domain_error("negative load");
  switch (kind_) {
    case Kind::zero: return 0.0;
    case Kind::linear: return param_;
    case Kind::quadratic: return 2.0 * param_ * s;
    case Kind::mm1: {
      if (s >= param_) return kBarrierSlope;
      double gap = param_ - s;
      return param_ / (gap * gap);
    }
  }
  return 0.0;
}

Network::Network(std::size_t node_count, std::size_t destination_count, std::vector<Edge> edges,
                 std::vector<NodeInfo> nodes)
    : edges_(std::move(edges)), nodes_(std::move(nodes)), destinations_(destination_count) {
  if (node_count < 2) throw TopologyError("network needs at least two nodes");
  if (destination_count < 1 || destination_count >= node_count)
    throw TopologyError("destination count must be in [1, N-1]");
  if (nodes_.size() != node_count) throw TopologyError("node info count does not match N");

  in_.assign(node_count, {});
  out_.assign(node_count, {});
  std::set<std::pair<NodeId, NodeId>> seen;
  for (EdgeId e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    auto where = "edge " + std::to_string(ed.from + 1) + "->" + std::to_string(ed.to + 1);
    if (ed.from >= node_count || ed.to >= node_count) throw TopologyError(where + ": node index out of range");
    if (ed.from == ed.to) throw TopologyError(where + ": self loop");
    if (ed.to == source()) throw TopologyError(where + ": source has incoming edge");
    if (is_destination(ed.from)) throw TopologyError(where + ": destination has outgoing edge");
    if (!(ed.capacity > 0)) throw TopologyError(where + ": capacity must be positive");
    if (!seen.insert({ed.from, ed.to}).second) throw TopologyError(where + ": duplicate edge");
    out_[ed.from].push_back(e);
    in_[ed.to].push_back(e);
  }
  if (nodes_[source()].cache_eligible) throw TopologyError("source node cannot cache");

  // Kahn's algorithm; smallest index first keeps the order deterministic.
  std::vector<std::size_t> indeg(node_count);
  for (NodeId i = 0; i < node_count; ++i) indeg[i] = in_[i].size();
  std::priority_queue<NodeId, std::vector<NodeId>, std::greater<>> ready;
  for (NodeId i = 0; i < node_count; ++i)
    if (indeg[i] == 0) ready.push(i);
  while (!ready.empty()) {
    NodeId i = ready.top();
    ready.pop();
    topo_.push_back(i);
    for (EdgeId e : out_[i])
      if (--indeg[edges_[e].to] == 0) ready.push(edges_[e].to);
  }
  if (topo_.size() != node_count) throw TopologyError("cycle detected");

  std::vector<bool> reach(node_count, false);
  reach[source()] = true;
  for (NodeId i : topo_) {
    if (!reach[i]) continue;
    for (EdgeId e : out_[i]) reach[edges_[e].to] = true;
  }
  for (NodeId t : destinations())
    if (!reach[t]) throw TopologyError("destination " + std::to_string(t + 1) + " is unreachable from the source");
}

std::vector<NodeId> Network::destinations() const {
  std::vector<NodeId> d;
  for (NodeId t = nodes_.size() - destinations_; t < nodes_.size(); ++t) d.push_back(t);
  return d;
}

std::string Network::display_name(NodeId i) const {
  return nodes_[i].label.empty() ? std::to_string(i + 1) : nodes_[i].label;
}

Network Network::with_caches(std::span<const bool> eligible, const CostFamily& family) const {
  if (eligible.size() != nodes_.size()) throw std::invalid_argument("eligibility vector size mismatch");
  auto nodes = nodes_;
  for (NodeId i = 0; i < nodes.size(); ++i) {
    nodes[i].cache_eligible = eligible[i];
    nodes[i].cache_cost = eligible[i] ? family : CostFamily::zero();
  }
  return Network(nodes_.size(), destinations_, edges_, std::move(nodes));
}

Network Network::with_edge_costs(std::span<const CostFamily> costs) const {
  if (costs.size() != edges_.size()) throw std::invalid_argument("edge cost vector size mismatch");
  auto edges = edges_;
  for (EdgeId e = 0; e < edges.size(); ++e) edges[e].cost = costs[e];
  return Network(nodes_.size(), destinations_, std::move(edges), nodes_);
}

namespace {

[[noreturn]] void parse_fail(std::size_t line, const std::string& what) {
  throw TopologyError("line " + std::to_string(line) + ": " + what);
}

NodeId parse_node(std::istringstream& in, std::size_t n, std::size_t line, const char* field) {
  long long v = 0;
  if (!(in >> v)) parse_fail(line, std::string("expected node index for '") + field + "'");
  if (v < 1 || static_cast<std::size_t>(v) > n)
    parse_fail(line, std::string("node index ") + std::to_string(v) + " out of range for '" + field + "'");
  return static_cast<NodeId>(v - 1);
}

double parse_number(std::istringstream& in, std::size_t line, const char* field) {
  double v = 0;
  if (!(in >> v)) parse_fail(line, std::string("expected number for '") + field + "'");
  return v;
}

}  // namespace

Network load_topology(std::string_view text) {
  std::istringstream doc{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  std::size_t n = 0, l = 0;
  bool have_nodes = false;
  std::vector<Edge> edges;
  std::vector<NodeInfo> nodes;
  struct PendingCost {
    NodeId from, to;
    CostFamily cost;
    std::size_t line;
  };
  std::vector<PendingCost> pending;

  while (std::getline(doc, raw)) {
    ++line_no;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream in(raw);
    std::string kw;
    if (!(in >> kw)) continue;
    if (kw != "nodes" && !have_nodes) parse_fail(line_no, "'nodes N L' must come first");
    try {
      if (kw == "nodes") {
        if (have_nodes) parse_fail(line_no, "duplicate 'nodes' directive");
        long long nn = 0, ll = 0;
        if (!(in >> nn >> ll) || nn < 2 || ll < 1 || ll >= nn) parse_fail(line_no, "expected 'nodes N L' with 1 <= L < N");
        n = static_cast<std::size_t>(nn);
        l = static_cast<std::size_t>(ll);
        nodes.assign(n, NodeInfo{});
        have_nodes = true;
      } else if (kw == "edge") {
        NodeId i = parse_node(in, n, line_no, "edge");
        NodeId j = parse_node(in, n, line_no, "edge");
        double c = parse_number(in, line_no, "capacity");
        if (!(c > 0)) parse_fail(line_no, "capacity must be positive");
        edges.push_back({i, j, c, CostFamily::mm1(c)});
      } else if (kw == "edgecost") {
        NodeId i = parse_node(in, n, line_no, "edgecost");
        NodeId j = parse_node(in, n, line_no, "edgecost");
        std::string fam;
        if (!(in >> fam)) parse_fail(line_no, "expected cost family");
        double p = 0;
        in >> p;
        pending.push_back({i, j, CostFamily::parse(fam, p), line_no});
      } else if (kw == "cache") {
        NodeId i = parse_node(in, n, line_no, "cache");
        std::string fam;
        if (!(in >> fam)) parse_fail(line_no, "expected cache cost family");
        double p = 0;
        in >> p;
        nodes[i].cache_eligible = true;
        nodes[i].cache_cost = CostFamily::parse(fam, p);
      } else if (kw == "role") {
        NodeId i = parse_node(in, n, line_no, "role");
        std::string role;
        in >> role;
        if (role == "edge") nodes[i].role = NodeRole::edge;
        else if (role == "plain") nodes[i].role = NodeRole::plain;
        else parse_fail(line_no, "unknown role '" + role + "'");
      } else if (kw == "label") {
        NodeId i = parse_node(in, n, line_no, "label");
        std::string name;
        if (!(in >> name)) parse_fail(line_no, "expected label text");
        nodes[i].label = name;
      } else {
        parse_fail(line_no, "unknown directive '" + kw + "'");
      }
    } catch (const std::invalid_argument& e) {
      parse_fail(line_no, e.what());
    }
    std::string extra;
    if (in.clear(), in >> extra) parse_fail(line_no, "unexpected trailing field '" + extra + "'");
  }
  if (!have_nodes) throw TopologyError("missing 'nodes N L' directive");
  for (const auto& pc : pending) {
    auto it = std::find_if(edges.begin(), edges.end(), [&](const Edge& e) { return e.from == pc.from && e.to == pc.to; });
    if (it == edges.end()) parse_fail(pc.line, "edgecost refers to a missing edge");
    it->cost = pc.cost;
  }
  return Network(n, l, std::move(edges), std::move(nodes));
}

Network load_topology_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw TopologyError("cannot open topology file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return load_topology(ss.str());
}

std::string serialize_topology(const Network& net) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "nodes " << net.node_count() << ' ' << net.destination_count() << '\n';
  for (NodeId i = 0; i < net.node_count(); ++i) {
    const auto& nd = net.node(i);
    if (!nd.label.empty()) os << "label " << i + 1 << ' ' << nd.label << '\n';
    if (nd.role == NodeRole::edge) os << "role " << i + 1 << " edge\n";
    if (nd.cache_eligible) os << "cache " << i + 1 << ' ' << nd.cache_cost.name() << ' ' << nd.cache_cost.param() << '\n';
  }
  for (const auto& e : net.edges()) {
    os << "edge " << e.from + 1 << ' ' << e.to + 1 << ' ' << e.capacity << '\n';
    if (!(e.cost == CostFamily::mm1(e.capacity)))
      os << "edgecost " << e.from + 1 << ' ' << e.to + 1 << ' ' << e.cost.name() << ' ' << e.cost.param() << '\n';
  }
  return os.str();
}

FlowResult max_flow(const Network& net, std::span<const double> capacity, NodeId sink) {
  // Edmonds-Karp on the residual graph; arcs 2e (forward) and 2e+1 (reverse).
  const std::size_t m = net.edge_count();
  if (capacity.size() != m) throw std::invalid_argument("capacity vector size mismatch");
  constexpr double kEps = 1e-12;
  std::vector<double> residual(2 * m);
  std::vector<std::vector<std::size_t>> adj(net.node_count());
  for (EdgeId e = 0; e < m; ++e) {
    residual[2 * e] = std::max(0.0, capacity[e]);
    residual[2 * e + 1] = 0.0;
    adj[net.edge(e).from].push_back(2 * e);
    adj[net.edge(e).to].push_back(2 * e + 1);
  }
  auto head = [&](std::size_t arc) { return arc % 2 == 0 ? net.edge(arc / 2).to : net.edge(arc / 2).from; };

  FlowResult out;
  while (true) {
    std::vector<std::size_t> via(net.node_count(), SIZE_MAX);
    std::vector<bool> seen(net.node_count(), false);
    std::queue<NodeId> bfs;
    bfs.push(net.source());
    seen[net.source()] = true;
    while (!bfs.empty() && !seen[sink]) {
      NodeId u = bfs.front();
      bfs.pop();
      for (std::size_t arc : adj[u]) {
        NodeId v = head(arc);
        if (!seen[v] && residual[arc] > kEps) {
          seen[v] = true;
          via[v] = arc;
          bfs.push(v);
        }
      }
    }
    if (!seen[sink]) break;
    double push = kInfeasible;
    for (NodeId v = sink; v != net.source(); v = head(via[v] ^ 1)) push = std::min(push, residual[via[v]]);
    for (NodeId v = sink; v != net.source(); v = head(via[v] ^ 1)) {
      residual[via[v]] -= push;
      residual[via[v] ^ 1] += push;
    }
    out.value += push;
  }
  out.edge_flow.resize(m);
  for (EdgeId e = 0; e < m; ++e) out.edge_flow[e] = residual[2 * e + 1];
  return out;
}

double min_cut(const Network& net, NodeId terminal) {
  if (!net.is_destination(terminal)) throw std::invalid_argument("min_cut: node is not a destination");
  std::vector<double> cap;
  for (const auto& e : net.edges()) cap.push_back(e.capacity);
  return max_flow(net, cap, terminal).value;
}

double Instance::bits_per_symbol() const { return std::log2(static_cast<double>(modulus)); }

double Instance::update_payload() const {
  if (payload_mode == PayloadMode::raw) return 2.0 * sparsity;
  return 2.0 * sparsity * bits_per_symbol() / bits_per_unit;
}

void Instance::validate() const {
  if (!(frame_size > 0)) throw std::invalid_argument("frame size B must be positive");
  if (sparsity < 0 || sparsity > frame_size) throw std::invalid_argument("sparsity must satisfy 0 <= eps <= B");
  if (rounds < 1) throw std::invalid_argument("rounds M must be at least 1");
  if (!(bits_per_unit > 0)) throw std::invalid_argument("bits per unit must be positive");
  if (!gf::is_prime(modulus)) throw std::invalid_argument("field modulus must be prime");
}

void Instance::require_capacity_headroom() const {
  for (NodeId t : network.destinations()) {
    double cut = min_cut(network, t);
    if (!(frame_size < cut)) {
      std::ostringstream os;
      os << "frame size B=" << frame_size << " is not below the min-cut " << cut << " to destination "
         << network.display_name(t);
      throw std::invalid_argument(os.str());
    }
  }
}

Scenario parse_scenario(std::string_view name) {
  if (name == "no") return Scenario::no;
  if (name == "edge") return Scenario::edge;
  if (name == "peer") return Scenario::peer;
  if (name == "edge+peer" || name == "peer+edge") return Scenario::edge_peer;
  if (name == "all") return Scenario::all;
  throw std::invalid_argument("unknown scenario '" + std::string(name) + "' (no|edge|peer|edge+peer|all)");
}

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::no: return "no";
    case Scenario::edge: return "edge";
    case Scenario::peer: return "peer";
    case Scenario::edge_peer: return "edge+peer";
    case Scenario::all: return "all";
  }
  return "?";
}

Network apply_scenario(const Network& net, Scenario s, const CostFamily& family) {
  std::unique_ptr<bool[]> eligible(new bool[net.node_count()]);
  for (NodeId i = 0; i < net.node_count(); ++i) {
    bool edge = net.node(i).role == NodeRole::edge;
    bool peer = net.is_destination(i);
    bool on = false;
    switch (s) {
      case Scenario::no: break;
      case Scenario::edge: on = edge; break;
      case Scenario::peer: on = peer; break;
      case Scenario::edge_peer: on = edge || peer; break;
      case Scenario::all: on = true; break;
    }
    eligible[i] = on && i != net.source();
  }
  return net.with_caches(std::span<const bool>(eligible.get(), net.node_count()), family);
}

}  // namespace ccm::net
