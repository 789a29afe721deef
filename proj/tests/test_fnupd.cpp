#include <doctest.h>

#include <algorithm>
#include <random>

#include "ccm/fnupd.hpp"
#include "ccm/lnc.hpp"
#include "test_support.hpp"

using namespace ccm;
using fnupd::UpdateCodec;

namespace {

gf::Vec random_vec(const gf::Field& f, std::size_t n, std::mt19937_64& rng) {
  gf::Vec v(n);
  for (auto& x : v) x = f.random(rng);
  return v;
}

// e with exactly `weight` nonzero entries at random positions.
gf::Vec sparse_change(const gf::Field& f, std::size_t n, std::size_t weight, std::mt19937_64& rng) {
  std::vector<std::size_t> pos(n);
  for (std::size_t i = 0; i < n; ++i) pos[i] = i;
  std::shuffle(pos.begin(), pos.end(), rng);
  gf::Vec e(n, 0);
  for (std::size_t k = 0; k < weight; ++k) e[pos[k]] = f.random_nonzero(rng);
  return e;
}

UpdateCodec single_source(const gf::Field& f, const gf::Matrix& a, std::size_t eps, std::uint64_t seed) {
  return fnupd::make_codec(f, {gf::Matrix::identity(a.rows())}, {a}, eps, seed);
}

gf::Vec syndrome_of(const UpdateCodec& c, const gf::Vec& m) {
  gf::Vec s(c.gamma, 0);
  for (std::size_t l = 0; l < c.H.size(); ++l)
    s = gf::vec_add(c.field, s, fnupd::encode(c, l, gf::mat_vec(c.field, c.P[l], m)));
  return s;
}

}  // namespace

TEST_CASE("field size requirement") {
  CHECK_THROWS_AS(fnupd::require_field(gf::Field(31), 4, 1), fnupd::FieldTooSmall);
  CHECK_NOTHROW(fnupd::require_field(gf::Field(37), 4, 1));
  CHECK_NOTHROW(fnupd::require_field(gf::Field(2), 4, 0));
}

TEST_CASE("zero sparsity codec is empty") {
  gf::Field f(7);
  std::mt19937_64 rng(1);
  auto a = gf::Matrix::random(f, 3, 4, rng);
  UpdateCodec c = single_source(f, a, 0, 1);
  CHECK(c.gamma == 0);
  CHECK(fnupd::encode(c, 0, random_vec(f, 3, rng)).empty());
  gf::Vec cache = gf::mat_vec(f, a, random_vec(f, 4, rng));
  CHECK(fnupd::decode(c, gf::Vec{}, cache) == cache);
}

TEST_CASE("full-rank 4x4, eps 1 uses two syndrome symbols") {
  gf::Field f(gf::admissible_modulus(4, 1));
  std::mt19937_64 rng(4);
  gf::Matrix a;
  do a = gf::Matrix::random(f, 4, 4, rng);
  while (gf::rank(f, a) < 4);
  UpdateCodec c = single_source(f, a, 1, 8);
  CHECK(c.gamma == 2);
  CHECK_FALSE(c.rank_branch);
  // Certified injectivity on every pair of columns, checked independently.
  int supports = 0;
  fnupd::for_each_subset(4, 2, [&](std::span<const std::size_t> t) {
    CHECK(gf::rank(f, c.SA.select_columns(t)) == gf::rank(f, a.select_columns(t)));
    ++supports;
    return true;
  });
  CHECK(supports == 6);

  for (std::size_t pos = 0; pos < 4; ++pos) {
    for (int trial = 0; trial < 50; ++trial) {
      gf::Vec x = random_vec(f, 4, rng);
      gf::Vec e(4, 0);
      e[pos] = f.random_nonzero(rng);
      gf::Vec next = gf::vec_add(f, x, e);
      gf::Vec out = fnupd::decode(c, syndrome_of(c, next), gf::mat_vec(f, a, x));
      CHECK(out == gf::mat_vec(f, a, next));
    }
  }
  gf::Vec x = random_vec(f, 4, rng);
  gf::Vec cache = gf::mat_vec(f, a, x);
  CHECK(fnupd::decode(c, syndrome_of(c, x), cache) == cache);
}

TEST_CASE("low-rank transfer takes the rank branch") {
  gf::Field f(gf::admissible_modulus(4, 2));
  std::mt19937_64 rng(6);
  auto a = gf::mat_mul(f, gf::Matrix::random(f, 3, 1, rng), gf::Matrix::random(f, 1, 4, rng));
  REQUIRE(gf::rank(f, a) == 1);
  UpdateCodec c = single_source(f, a, 2, 3);
  CHECK(c.rank_branch);
  CHECK(c.gamma == 1);
  for (int trial = 0; trial < 50; ++trial) {
    gf::Vec x = random_vec(f, 4, rng);
    gf::Vec next = gf::vec_add(f, x, sparse_change(f, 4, 2, rng));
    CHECK(fnupd::decode(c, syndrome_of(c, next), gf::mat_vec(f, a, x)) == gf::mat_vec(f, a, next));
  }
}

TEST_CASE("encoding identities") {
  gf::Field f(gf::admissible_modulus(4, 1));
  std::mt19937_64 rng(10);
  std::vector<gf::Matrix> C{gf::Matrix::random(f, 4, 2, rng), gf::Matrix::random(f, 4, 3, rng)};
  std::vector<gf::Matrix> P{gf::Matrix::random(f, 2, 4, rng), gf::Matrix::random(f, 3, 4, rng)};
  UpdateCodec c = fnupd::make_codec(f, C, P, 1, 5);
  CHECK(c.A == gf::mat_add(f, gf::mat_mul(f, C[0], P[0]), gf::mat_mul(f, C[1], P[1])));
  CHECK(c.gamma == std::min<std::size_t>(2, gf::rank(f, c.A)));
  CHECK(c.gamma <= gf::rank(f, gf::hstack(C, 4)));
  CHECK(fnupd::encode(c, 0, gf::Vec(2, 0)) == gf::Vec(c.gamma, 0));
  for (int trial = 0; trial < 20; ++trial) {
    gf::Vec m = random_vec(f, 4, rng);
    CHECK(syndrome_of(c, m) == gf::mat_vec(f, c.SA, m));
  }
  CHECK_THROWS_AS(fnupd::encode(c, 2, gf::Vec(2, 0)), std::out_of_range);
  CHECK_THROWS_AS(fnupd::decode(c, gf::Vec(c.gamma + 1, 0), gf::Vec(4, 0)), gf::DimensionError);
}

TEST_CASE("over-sparse changes never decode silently inconsistent") {
  gf::Field f(gf::admissible_modulus(6, 1));
  std::mt19937_64 rng(21);
  gf::Matrix a;
  do a = gf::Matrix::random(f, 5, 6, rng);
  while (gf::rank(f, a) < 5);
  UpdateCodec c = single_source(f, a, 1, 2);
  int rejected = 0, consistent = 0;
  for (int trial = 0; trial < 200; ++trial) {
    gf::Vec x = random_vec(f, 6, rng);
    gf::Vec next = gf::vec_add(f, x, sparse_change(f, 6, 2, rng));
    gf::Vec syn = syndrome_of(c, next);
    gf::Vec cache = gf::mat_vec(f, a, x);
    try {
      gf::Vec out = fnupd::decode(c, syn, cache);
      // Any answer must explain the syndrome with a change of weight <= 1.
      CHECK(gf::mat_vec(f, c.S, out) == syn);
      ++consistent;
    } catch (const fnupd::DecodeError&) {
      ++rejected;
    }
  }
  CHECK(rejected + consistent == 200);
  CHECK(rejected > 0);
}

TEST_CASE("codecs built from a network code") {
  net::Network net = test::fixture("butterfly");
  gf::Field f(gf::admissible_modulus(4, 1));
  auto dims = lnc::repair_dims(net, std::vector<std::size_t>(net.edge_count(), 2), 4);
  auto code = lnc::build_code(net, dims, 4, f, 12);
  std::mt19937_64 rng(13);
  for (net::NodeId i = 1; i < net.node_count(); ++i) {
    UpdateCodec c = fnupd::build_codec(net, code, i, 1, 40 + i);
    CHECK(c.A == code.transfer[i]);
    CHECK(c.H.size() == net.in_edges(i).size());
    for (int trial = 0; trial < 20; ++trial) {
      gf::Vec m = random_vec(f, 4, rng);
      gf::Vec next = gf::vec_add(f, m, sparse_change(f, 4, 1, rng));
      auto ex = lnc::propagate(net, code, next);
      gf::Vec syn(c.gamma, 0);
      const auto& in = net.in_edges(i);
      for (std::size_t l = 0; l < in.size(); ++l)
        syn = gf::vec_add(f, syn, fnupd::encode(c, l, ex.edge_payload[in[l]]));
      CHECK(fnupd::decode(c, syn, lnc::propagate(net, code, m).node_output[i]) == ex.node_output[i]);
    }
  }
  CHECK_THROWS(fnupd::build_codec(net, code, 0, 1, 1));
}
