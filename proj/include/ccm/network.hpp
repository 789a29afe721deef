#pragma once

// Multicast network model: a single-source DAG whose last L nodes are the
// destinations, with per-edge cost families and per-node cache cost families.

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ccm/gf.hpp"

namespace ccm::net {

using NodeId = std::size_t;  // 0-based; node 0 is the source
using EdgeId = std::size_t;

inline constexpr double kInfeasible = std::numeric_limits<double>::infinity();

// Derivative reported for an M/M/1 family evaluated at or beyond capacity.
inline constexpr double kBarrierSlope = 1e9;

class CostFamily {
 public:
  enum class Kind { zero, linear, quadratic, mm1 };

  CostFamily() = default;
  static CostFamily zero() { return {Kind::zero, 0.0}; }
  static CostFamily linear(double slope) { return {Kind::linear, slope}; }
  static CostFamily quadratic(double coeff) { return {Kind::quadratic, coeff}; }
  static CostFamily mm1(double capacity) { return {Kind::mm1, capacity}; }
  // Parses "zero"/"none", "linear", "quadratic", "mm1".
  static CostFamily parse(std::string_view name, double param);

  Kind kind() const { return kind_; }
  double param() const { return param_; }
  std::string name() const;

  // f(s); kInfeasible for an M/M/1 load at or above capacity. Throws
  // std::domain_error for a negative load.
  double eval(double load) const;
  // f'(s); kBarrierSlope for an M/M/1 load at or above capacity.
  double deriv(double load) const;

  bool operator==(const CostFamily&) const = default;

 private:
  CostFamily(Kind k, double p) : kind_(k), param_(p) {}
  Kind kind_ = Kind::zero;
  double param_ = 0.0;
};

enum class NodeRole { plain, edge };

struct Edge {
  NodeId from;
  NodeId to;
  double capacity;
  CostFamily cost;

  bool operator==(const Edge&) const = default;
};

struct NodeInfo {
  std::string label;
  NodeRole role = NodeRole::plain;
  bool cache_eligible = false;
  CostFamily cache_cost;

  bool operator==(const NodeInfo&) const = default;
};

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Network {
 public:
  // Validates every structural invariant; throws TopologyError.
  Network(std::size_t node_count, std::size_t destination_count, std::vector<Edge> edges,
          std::vector<NodeInfo> nodes);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }
  std::size_t destination_count() const { return destinations_; }
  NodeId source() const { return 0; }
  bool is_destination(NodeId i) const { return i + destinations_ >= nodes_.size(); }
  std::vector<NodeId> destinations() const;
  // Index of a destination among the destinations (0..L-1).
  std::size_t destination_index(NodeId t) const { return t + destinations_ - nodes_.size(); }

  const Edge& edge(EdgeId e) const { return edges_[e]; }
  const std::vector<Edge>& edges() const { return edges_; }
  const NodeInfo& node(NodeId i) const { return nodes_[i]; }
  const std::vector<NodeInfo>& nodes() const { return nodes_; }

  // Edge ids in document order.
  const std::vector<EdgeId>& in_edges(NodeId i) const { return in_[i]; }
  const std::vector<EdgeId>& out_edges(NodeId i) const { return out_[i]; }
  const std::vector<NodeId>& topological_order() const { return topo_; }

  // Label from the document, or the 1-based index when none was given.
  std::string display_name(NodeId i) const;

  // Copy with the cache flags and cache cost families replaced.
  Network with_caches(std::span<const bool> eligible, const CostFamily& family) const;
  Network with_edge_costs(std::span<const CostFamily> costs) const;

  bool operator==(const Network& o) const { return edges_ == o.edges_ && nodes_ == o.nodes_ && destinations_ == o.destinations_; }

 private:
  std::vector<Edge> edges_;
  std::vector<NodeInfo> nodes_;
  std::size_t destinations_;
  std::vector<std::vector<EdgeId>> in_;
  std::vector<std::vector<EdgeId>> out_;
  std::vector<NodeId> topo_;
};

// Topology document, one directive per line, '#' starts a comment:
//   nodes N L
//   edge i j capacity            (default cost: mm1 with that capacity)
//   edgecost i j family param
//   cache i family param         (marks node i cache-eligible)
//   role i edge
//   label i name
// Node indices are 1-based; node 1 is the source, N-L+1..N are destinations.
Network load_topology(std::string_view text);
Network load_topology_file(const std::string& path);
std::string serialize_topology(const Network& net);

// Which nodes may cache: none, role-edge nodes, destinations, both, or
// every non-source node.
enum class Scenario { no, edge, peer, edge_peer, all };
Scenario parse_scenario(std::string_view name);
std::string scenario_name(Scenario s);
Network apply_scenario(const Network& net, Scenario s, const CostFamily& family);

struct FlowResult {
  double value = 0.0;
  std::vector<double> edge_flow;
};

// Maximum source-to-sink flow under the given per-edge capacities.
FlowResult max_flow(const Network& net, std::span<const double> capacity, NodeId sink);

// Minimum source-to-terminal cut under the network's edge capacities.
double min_cut(const Network& net, NodeId terminal);

// Problem parameters shared by the optimizer and the simulator.
struct Instance {
  enum class PayloadMode { bits, raw };

  Network network;
  double frame_size = 1.0;  // B, in rate units (symbols for simulation)
  double sparsity = 0.0;    // epsilon
  int rounds = 1;           // M
  gf::Elem modulus = 2;     // q
  PayloadMode payload_mode = PayloadMode::bits;
  double bits_per_unit = 1.0;

  double bits_per_symbol() const;
  // Update payload carried by each in-edge of a caching node, in rate units:
  // 2*eps*log2(q)/bits_per_unit in bits mode, 2*eps in raw mode.
  double update_payload() const;
  // Basic parameter ranges; throws std::invalid_argument.
  void validate() const;
  // Throws std::invalid_argument unless B is below every destination min-cut.
  void require_capacity_headroom() const;
};

}  // namespace ccm::net
