#include "ccm/lnc.hpp"

#include <queue>
#include <random>
#include <string>

namespace ccm::lnc {

namespace {

void layout(const net::Network& net, NetworkCode& code) {
  code.out_offset.assign(net.edge_count(), 0);
  code.in_offset.assign(net.edge_count(), 0);
  for (NodeId i = 0; i < net.node_count(); ++i) {
    std::size_t off = 0;
    for (EdgeId e : net.out_edges(i)) {
      code.out_offset[e] = off;
      off += code.dims[e];
    }
    off = 0;
    for (EdgeId e : net.in_edges(i)) {
      code.in_offset[e] = off;
      off += code.dims[e];
    }
  }
}

std::vector<double> as_capacity(std::span<const std::size_t> dims) {
  return {dims.begin(), dims.end()};
}

// Left inverse of a full-column-rank matrix built from B independent rows.
gf::Matrix left_inverse(const gf::Field& f, const gf::Matrix& x) {
  auto rows = gf::independent_rows(f, x);
  const std::size_t b = x.cols();
  gf::Matrix square(b, b);
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < b; ++c) square(r, c) = x(rows[r], c);
  auto inv = gf::inverse(f, square);
  if (!inv) throw CodeError("internal: selected rows are not independent");
  gf::Matrix d(b, x.rows());
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t c = 0; c < b; ++c) d(r, rows[c]) = (*inv)(r, c);
  return d;
}

}  // namespace

std::size_t NetworkCode::input_dim(const net::Network& net, NodeId i) const {
  if (i == net.source()) return frame_size;
  std::size_t d = 0;
  for (EdgeId e : net.in_edges(i)) d += dims[e];
  return d;
}

std::size_t NetworkCode::output_dim(const net::Network& net, NodeId i) const {
  if (net.is_destination(i)) return frame_size;
  std::size_t d = 0;
  for (EdgeId e : net.out_edges(i)) d += dims[e];
  return d;
}

gf::Matrix NetworkCode::edge_transfer(const net::Network& net, EdgeId e) const {
  return transfer[net.edge(e).from].row_block(out_offset[e], dims[e]);
}

gf::Matrix NetworkCode::input_block(const net::Network& net, EdgeId e) const {
  return coding[net.edge(e).to].col_block(in_offset[e], dims[e]);
}

bool dims_feasible(const net::Network& net, std::span<const std::size_t> dims, std::size_t frame_size) {
  if (dims.size() != net.edge_count()) throw std::invalid_argument("dims length does not match edge count");
  auto cap = as_capacity(dims);
  for (NodeId t : net.destinations())
    if (net::max_flow(net, cap, t).value + 0.5 < static_cast<double>(frame_size)) return false;
  return true;
}

std::vector<std::size_t> repair_dims(const net::Network& net, std::vector<std::size_t> dims, std::size_t frame_size) {
  if (dims.size() != net.edge_count()) throw std::invalid_argument("dims length does not match edge count");
  for (NodeId t : net.destinations()) {
    while (net::max_flow(net, as_capacity(dims), t).value + 0.5 < static_cast<double>(frame_size)) {
      // One more symbol on every edge of a fewest-hop path raises the flow by one.
      std::vector<EdgeId> via(net.node_count(), net.edge_count());
      std::vector<bool> seen(net.node_count(), false);
      std::queue<NodeId> frontier;
      frontier.push(net.source());
      seen[net.source()] = true;
      while (!frontier.empty() && !seen[t]) {
        NodeId i = frontier.front();
        frontier.pop();
        for (EdgeId e : net.out_edges(i)) {
          NodeId j = net.edge(e).to;
          if (seen[j]) continue;
          seen[j] = true;
          via[j] = e;
          frontier.push(j);
        }
      }
      for (NodeId j = t; j != net.source(); j = net.edge(via[j]).from) ++dims[via[j]];
    }
  }
  return dims;
}

void transfer_matrices(const net::Network& net, NetworkCode& code) {
  const auto& f = code.field;
  const std::size_t b = code.frame_size;
  code.input.assign(net.node_count(), gf::Matrix());
  code.transfer.assign(net.node_count(), gf::Matrix());
  for (NodeId i : net.topological_order()) {
    if (i == net.source()) {
      code.input[i] = gf::Matrix::identity(b);
    } else {
      std::vector<gf::Matrix> blocks;
      for (EdgeId e : net.in_edges(i)) blocks.push_back(code.edge_transfer(net, e));
      code.input[i] = gf::vstack(blocks, b);
    }
    code.transfer[i] = gf::mat_mul(f, code.coding[i], code.input[i]);
  }
}

NetworkCode build_code(const net::Network& net, std::span<const std::size_t> dims, std::size_t frame_size,
                       const gf::Field& field, std::uint64_t seed, int max_attempts) {
  if (frame_size == 0) throw std::invalid_argument("frame size must be positive");
  if (max_attempts < 1) throw std::invalid_argument("retry budget must be positive");
  if (!dims_feasible(net, dims, frame_size)) throw CodeError("infeasible dims: a destination min-cut is below B");

  NetworkCode code;
  code.field = field;
  code.frame_size = frame_size;
  code.dims.assign(dims.begin(), dims.end());
  layout(net, code);

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(attempt)};
    std::mt19937_64 rng(seq);
    code.coding.assign(net.node_count(), gf::Matrix());
    code.input.assign(net.node_count(), gf::Matrix());
    code.transfer.assign(net.node_count(), gf::Matrix());

    bool ok = true;
    for (NodeId i : net.topological_order()) {
      std::size_t in = code.input_dim(net, i);
      if (i == net.source()) {
        code.input[i] = gf::Matrix::identity(frame_size);
      } else {
        std::vector<gf::Matrix> blocks;
        for (EdgeId e : net.in_edges(i)) blocks.push_back(code.edge_transfer(net, e));
        code.input[i] = gf::vstack(blocks, frame_size);
      }
      if (net.is_destination(i)) {
        if (gf::rank(field, code.input[i]) < frame_size) {
          ok = false;
          break;
        }
        code.coding[i] = left_inverse(field, code.input[i]);
      } else {
        code.coding[i] = gf::Matrix::random(field, code.output_dim(net, i), in, rng);
      }
      code.transfer[i] = gf::mat_mul(field, code.coding[i], code.input[i]);
    }
    if (ok) {
      code.attempts = attempt + 1;
      return code;
    }
  }
  throw CodeError("no decodable code found in " + std::to_string(max_attempts) + " attempts (field too small?)");
}

Execution propagate(const net::Network& net, const NetworkCode& code, std::span<const gf::Elem> m) {
  if (m.size() != code.frame_size) throw gf::DimensionError("frame length does not match B");
  const auto& f = code.field;
  Execution ex;
  ex.node_output.assign(net.node_count(), {});
  ex.edge_payload.assign(net.edge_count(), {});
  for (NodeId i : net.topological_order()) {
    gf::Vec x;
    if (i == net.source()) {
      x.assign(m.begin(), m.end());
    } else {
      for (EdgeId e : net.in_edges(i)) x.insert(x.end(), ex.edge_payload[e].begin(), ex.edge_payload[e].end());
    }
    ex.node_output[i] = gf::mat_vec(f, code.coding[i], x);
    for (EdgeId e : net.out_edges(i)) {
      auto first = ex.node_output[i].begin() + static_cast<std::ptrdiff_t>(code.out_offset[e]);
      ex.edge_payload[e].assign(first, first + static_cast<std::ptrdiff_t>(code.dims[e]));
    }
  }
  return ex;
}

std::vector<gf::Vec> verify_decoding(const net::Network& net, const NetworkCode& code, std::span<const gf::Elem> m) {
  Execution ex = propagate(net, code, m);
  std::vector<gf::Vec> out;
  for (NodeId t : net.destinations()) {
    const auto& y = ex.node_output[t];
    if (!std::equal(y.begin(), y.end(), m.begin(), m.end()))
      throw CodeError("destination " + net.display_name(t) + " decoded a different frame");
    out.push_back(y);
  }
  return out;
}

}  // namespace ccm::lnc
