#pragma once

// Random linear network code over a prime field. Every node i stacks the
// payloads of its in-edges (document order) into x_i, emits y_i = G_i x_i and
// splits y_i over its out-edges (document order). The source uses x = m.
// A destination's G is its decoding matrix, so its y is the frame itself.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ccm/gf.hpp"
#include "ccm/network.hpp"

namespace ccm::lnc {

using net::EdgeId;
using net::NodeId;

class CodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetworkCode {
  gf::Field field{2};
  std::size_t frame_size = 0;
  std::vector<std::size_t> dims;       // symbols per edge per round
  std::vector<gf::Matrix> coding;      // G_i
  std::vector<gf::Matrix> input;       // X_i: x_i = X_i m
  std::vector<gf::Matrix> transfer;    // A_i: y_i = A_i m
  std::vector<std::size_t> out_offset; // row of edge e inside y_{from(e)}
  std::vector<std::size_t> in_offset;  // row of edge e inside x_{to(e)}
  int attempts = 0;                    // draws used, 1-based

  std::size_t input_dim(const net::Network& net, NodeId i) const;
  std::size_t output_dim(const net::Network& net, NodeId i) const;
  // A_{e}: the payload of edge e is edge_transfer(e) * m.
  gf::Matrix edge_transfer(const net::Network& net, EdgeId e) const;
  // Column block of G_{to(e)} multiplying the payload of edge e.
  gf::Matrix input_block(const net::Network& net, EdgeId e) const;
};

// Every destination can receive B symbols, i.e. the max-flow under `dims` is
// at least B.
bool dims_feasible(const net::Network& net, std::span<const std::size_t> dims, std::size_t frame_size);

// Adds symbols along shortest augmenting paths until dims_feasible holds.
std::vector<std::size_t> repair_dims(const net::Network& net, std::vector<std::size_t> dims, std::size_t frame_size);

// Draws G_i uniformly in topological order until every destination's input
// has rank B, re-seeding each attempt from (seed, attempt). Throws CodeError
// for infeasible dims or when the retry budget is exhausted.
NetworkCode build_code(const net::Network& net, std::span<const std::size_t> dims, std::size_t frame_size,
                       const gf::Field& field, std::uint64_t seed, int max_attempts = 32);

// Recomputes X_i and A_i from the coding matrices.
void transfer_matrices(const net::Network& net, NetworkCode& code);

struct Execution {
  std::vector<gf::Vec> node_output;  // y_i
  std::vector<gf::Vec> edge_payload; // per edge
};

// One cache-free round: forward propagation of frame m.
Execution propagate(const net::Network& net, const NetworkCode& code, std::span<const gf::Elem> m);

// Runs one round and returns each destination's output (in destination
// order). Throws CodeError if any differs from m.
std::vector<gf::Vec> verify_decoding(const net::Network& net, const NetworkCode& code, std::span<const gf::Elem> m);

}  // namespace ccm::lnc
