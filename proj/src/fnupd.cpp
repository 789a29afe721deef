#include "ccm/fnupd.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace ccm::fnupd {

namespace {

bool injective_on_supports(const gf::Field& f, const gf::Matrix& S, const gf::Matrix& A, std::size_t size) {
  gf::Matrix sa = gf::mat_mul(f, S, A);
  bool ok = true;
  for_each_subset(A.cols(), size, [&](std::span<const std::size_t> t) {
    ok = gf::rank(f, sa.select_columns(t)) == gf::rank(f, A.select_columns(t));
    return ok;
  });
  return ok;
}

}  // namespace

void require_field(const gf::Field& field, std::size_t frame_size, std::size_t sparsity) {
  if (sparsity == 0) return;
  long double bound = 2.0L * sparsity * std::pow(static_cast<long double>(frame_size), 2.0L * sparsity);
  if (static_cast<long double>(field.modulus()) < bound) {
    std::ostringstream os;
    os << "field too small: q=" << field.modulus() << " but sparse updates need q >= 2*eps*B^(2*eps) = "
       << static_cast<double>(bound);
    throw FieldTooSmall(os.str());
  }
}

UpdateCodec make_codec(const gf::Field& field, std::vector<gf::Matrix> C, std::vector<gf::Matrix> P,
                       std::size_t sparsity, std::uint64_t seed, int max_attempts) {
  if (C.size() != P.size() || C.empty()) throw gf::DimensionError("codec needs matching, non-empty C and P blocks");
  const std::size_t theta = C.front().rows();
  const std::size_t b = P.front().cols();
  if (sparsity > b) throw std::invalid_argument("sparsity exceeds frame size");
  require_field(field, b, sparsity);

  UpdateCodec c;
  c.field = field;
  c.sparsity = sparsity;
  c.A = gf::Matrix(theta, b);
  for (std::size_t l = 0; l < C.size(); ++l) c.A = gf::mat_add(field, c.A, gf::mat_mul(field, C[l], P[l]));
  c.C = std::move(C);
  c.P = std::move(P);
  c.rank = gf::rank(field, c.A);
  c.gamma = std::min(2 * sparsity, c.rank);
  c.rank_branch = c.rank <= 2 * sparsity;

  if (c.rank_branch) {
    auto rows = gf::independent_rows(field, c.A);
    c.S = gf::Matrix(c.gamma, theta);
    for (std::size_t k = 0; k < c.gamma; ++k) c.S(k, rows[k]) = 1;
    c.SA = gf::mat_mul(field, c.S, c.A);
    // Each row of A is a combination of the selected rows.
    gf::Matrix basis_t = c.SA.transpose();
    c.R = gf::Matrix(theta, c.gamma);
    for (std::size_t r = 0; r < theta; ++r) {
      auto coeff = gf::solve(field, basis_t, c.A.row(r));
      if (!coeff) throw std::logic_error("row outside the span of independent rows");
      for (std::size_t k = 0; k < c.gamma; ++k) c.R(r, k) = (*coeff)[k];
    }
  } else {
    const std::size_t support = std::min(2 * sparsity, b);
    bool found = false;
    for (int attempt = 0; attempt < max_attempts && !found; ++attempt) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(attempt)};
      std::mt19937_64 rng(seq);
      c.S = gf::Matrix::random(field, c.gamma, theta, rng);
      c.attempts = attempt + 1;
      found = injective_on_supports(field, c.S, c.A, support);
    }
    if (!found)
      throw std::runtime_error("no compression matrix passed support verification in " +
                               std::to_string(max_attempts) + " attempts");
    c.SA = gf::mat_mul(field, c.S, c.A);
  }
  for (const auto& block : c.C) c.H.push_back(gf::mat_mul(field, c.S, block));
  return c;
}

UpdateCodec build_codec(const net::Network& net, const lnc::NetworkCode& code, net::NodeId i, std::size_t sparsity,
                        std::uint64_t seed, int max_attempts) {
  if (i == net.source() || net.in_edges(i).empty()) throw std::invalid_argument("codec target has no in-neighbours");
  std::vector<gf::Matrix> C, P;
  for (net::EdgeId e : net.in_edges(i)) {
    C.push_back(code.input_block(net, e));
    P.push_back(code.edge_transfer(net, e));
  }
  UpdateCodec c = make_codec(code.field, std::move(C), std::move(P), sparsity, seed, max_attempts);
  if (!(c.A == code.transfer[i])) throw std::logic_error("codec transfer differs from the network code");
  return c;
}

gf::Vec encode(const UpdateCodec& codec, std::size_t l, std::span<const gf::Elem> input) {
  if (l >= codec.H.size()) throw std::out_of_range("in-neighbour index out of range");
  return gf::mat_vec(codec.field, codec.H[l], input);
}

gf::Vec decode(const UpdateCodec& codec, std::span<const gf::Elem> syndrome, std::span<const gf::Elem> cache) {
  const auto& f = codec.field;
  if (syndrome.size() != codec.gamma) throw gf::DimensionError("syndrome length differs from gamma");
  if (cache.size() != codec.output_dim()) throw gf::DimensionError("cache length differs from output dimension");
  // rho = S A e for the unknown sparse change e.
  gf::Vec rho = gf::vec_sub(f, syndrome, gf::mat_vec(f, codec.S, cache));

  if (codec.rank_branch) return gf::vec_add(f, cache, gf::mat_vec(f, codec.R, rho));

  const std::size_t b = codec.frame_size();
  for (std::size_t k = 0; k <= codec.sparsity; ++k) {
    std::optional<gf::Vec> delta;
    bool ambiguous = false;
    for_each_subset(b, k, [&](std::span<const std::size_t> t) {
      auto et = gf::solve(f, codec.SA.select_columns(t), rho);
      if (!et) return true;
      gf::Vec d = gf::mat_vec(f, codec.A.select_columns(t), *et);
      if (!delta) {
        delta = std::move(d);
      } else if (d != *delta) {
        ambiguous = true;
        return false;
      }
      return true;
    });
    if (ambiguous) throw DecodeError("two sparse changes explain the syndrome differently");
    if (delta) return gf::vec_add(f, cache, *delta);
  }
  throw DecodeError("no change of weight <= eps explains the syndrome");
}

}  // namespace ccm::fnupd
