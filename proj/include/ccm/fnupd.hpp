#pragma once

// Function-update codec for a caching node i. The node holds y^{(r-1)} = A m^{(r-1)}
// and must produce y^{(r)} = A m^{(r)} where m^{(r)} - m^{(r-1)} has at most
// eps nonzero entries. A = sum_l C_l P_l, with P_l the transfer of in-edge l
// and C_l the matching column block of the node's coding matrix. Each
// in-neighbour sends H_l y_l = S C_l P_l m, gamma = min(2 eps, rank A) symbols.
//
// rank A <= 2 eps: S keeps rank A independent rows of A and A = R S A.
// rank A >  2 eps: S is random, certified injective on the column span of
// every 2 eps columns of A, and the decoder searches supports of size <= eps.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "ccm/gf.hpp"
#include "ccm/lnc.hpp"
#include "ccm/network.hpp"

namespace ccm::fnupd {

class FieldTooSmall : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct UpdateCodec {
  gf::Field field{2};
  std::size_t sparsity = 0;       // eps
  gf::Matrix A;                   // theta x B
  std::vector<gf::Matrix> C;      // theta x d_l
  std::vector<gf::Matrix> P;      // d_l x B
  std::size_t rank = 0;           // rank A
  std::size_t gamma = 0;          // syndrome length
  bool rank_branch = true;
  gf::Matrix S;                   // gamma x theta
  gf::Matrix SA;                  // gamma x B
  gf::Matrix R;                   // theta x gamma, rank branch only
  std::vector<gf::Matrix> H;      // gamma x d_l
  int attempts = 0;               // S draws used by the sparse branch

  std::size_t output_dim() const { return A.rows(); }
  std::size_t frame_size() const { return A.cols(); }
};

// Throws FieldTooSmall unless q >= 2 eps B^(2 eps).
void require_field(const gf::Field& field, std::size_t frame_size, std::size_t sparsity);

// Generic construction from the blocks of A = sum_l C_l P_l.
UpdateCodec make_codec(const gf::Field& field, std::vector<gf::Matrix> C, std::vector<gf::Matrix> P,
                       std::size_t sparsity, std::uint64_t seed, int max_attempts = 32);

// Codec for node i of a built network code; in-edges in document order.
UpdateCodec build_codec(const net::Network& net, const lnc::NetworkCode& code, net::NodeId i, std::size_t sparsity,
                        std::uint64_t seed, int max_attempts = 32);

// H_l * input, where input is the payload of in-edge l this round.
gf::Vec encode(const UpdateCodec& codec, std::size_t l, std::span<const gf::Elem> input);

// New output from the summed syndromes and the cached previous output.
gf::Vec decode(const UpdateCodec& codec, std::span<const gf::Elem> syndrome, std::span<const gf::Elem> cache);

// Calls fn(support) for every size-k subset of {0..n-1} in lexicographic
// order; stops early when fn returns false.
template <typename Fn>
void for_each_subset(std::size_t n, std::size_t k, Fn&& fn) {
  if (k > n) return;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    if (!fn(std::span<const std::size_t>(idx))) return;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace ccm::fnupd
