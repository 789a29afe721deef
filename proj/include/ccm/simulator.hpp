#pragma once

// M-round execution of the cache-aided multicast scheme with exact cost
// accounting. Round 1 runs the network code without caches; in later rounds
// every caching node receives syndromes from its in-neighbours and updates
// its stored output. A cache-free reference run is executed alongside and
// compared node by node.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ccm/fnupd.hpp"
#include "ccm/gf.hpp"
#include "ccm/lnc.hpp"
#include "ccm/network.hpp"
#include "ccm/optimizer.hpp"

namespace ccm::sim {

using net::EdgeId;
using net::NodeId;

struct FrameSequence {
  std::vector<gf::Vec> frames;  // M frames of length B
};

// First frame uniform; each next frame changes exactly eps uniformly chosen
// positions by uniform nonzero amounts.
FrameSequence gen_frames(const gf::Field& field, std::size_t frame_size, std::size_t sparsity, int rounds,
                         std::uint64_t seed);

// Hamming weight of a - b.
std::size_t change_weight(const gf::Vec& a, const gf::Vec& b);

// Code plus per-node codecs for nodes with delta = 1.
struct Plan {
  std::vector<int> delta;
  lnc::NetworkCode code;
  std::vector<std::optional<fnupd::UpdateCodec>> codecs;
};

Plan build_plan(const net::Instance& inst, std::vector<int> delta, std::span<const std::size_t> dims,
                std::uint64_t seed);

struct LedgerRow {
  int round = 0;
  std::string kind;   // "edge" or "cache"
  std::string item;   // "i->j" or node name
  std::size_t symbols = 0;
  double bits = 0.0;
  double cost = 0.0;
};

struct CostLedger {
  std::vector<LedgerRow> rows;
  std::vector<double> round_cost;  // per round, communication plus caching
  double realized = 0.0;           // sum of round costs
  double bound = 0.0;              // cost of the scheme with 2 eps symbols per cached in-edge
};

struct RunResult {
  std::vector<std::vector<gf::Vec>> decoded;  // [destination][round]
  bool decode_exact = true;
  bool matches_reference = true;
  std::string mismatch;                       // first discrepancy, if any
  CostLedger ledger;
};

// Requires inst.frame_size to equal the code's B and the frames to respect
// the sparsity bound. Edge loads are symbols * log2(q) / bits_per_unit.
RunResult run(const net::Instance& inst, const Plan& plan, const FrameSequence& frames);

// Upper bound on the realized cost for a given placement (every cached
// in-edge charged 2 eps symbols, every cache charged its full size).
double cost_bound(const net::Instance& inst, std::span<const int> delta, std::span<const std::size_t> dims);

struct ScenarioResult {
  net::Scenario scenario;
  double psi = 0.0;  // relaxed optimum
  bool converged = false;
  long iterations = 0;
  double realized = 0.0;
  double bound = 0.0;
  bool decode_exact = false;
  std::vector<int> delta;
};

// Solves, rounds, builds the code and simulates one frame sequence per
// scenario. `inst` must already carry integer B and eps (symbols) and a
// field; cache costs come from `family`.
std::vector<ScenarioResult> compare_scenarios(const net::Instance& inst, const opt::SolverConfig& cfg,
                                              std::span<const net::Scenario> scenarios,
                                              const net::CostFamily& family);

}  // namespace ccm::sim
