#include <doctest.h>

#include <cmath>
#include <random>

#include "ccm/optimizer.hpp"
#include "test_support.hpp"

using namespace ccm;
using opt::FlowState;
using opt::SolverConfig;

namespace {

// S -> D with an M/M/1 link of capacity 2; D may cache at `cache` cost.
net::Instance single_edge(double b, int rounds, const std::string& cache = "") {
  std::string doc = "nodes 2 1\nedge 1 2 2\n";
  if (!cache.empty()) doc += "cache 2 " + cache + "\n";
  net::Instance inst{net::load_topology(doc)};
  inst.frame_size = b;
  inst.sparsity = 0.1;
  inst.rounds = rounds;
  inst.modulus = 37;
  inst.payload_mode = net::Instance::PayloadMode::raw;
  return inst;
}

// S -> A -> D, capacities 2; A may cache at `cache` cost.
net::Instance relay(const std::string& cache) {
  net::Instance inst{net::load_topology("nodes 3 1\nedge 1 2 2\nedge 2 3 2\ncache 2 " + cache + "\n")};
  inst.frame_size = 1.0;
  inst.sparsity = 0.1;
  inst.rounds = 3;
  inst.modulus = 37;
  inst.payload_mode = net::Instance::PayloadMode::raw;
  return inst;
}

}  // namespace

TEST_CASE("objective by hand") {
  auto inst = single_edge(1.0, 2);
  FlowState s = FlowState::zeros(inst.network);
  CHECK(opt::objective(s, inst, 20) == 0.0);
  s.mu[0] = 1.0;
  CHECK(opt::objective(s, inst, 20) == doctest::Approx(2.0));

  // Caching at D swaps the second-round edge term for the update payload.
  auto cached = single_edge(1.0, 5, "linear 0.5");
  FlowState a = FlowState::zeros(cached.network);
  a.mu[0] = 1.0;
  FlowState b = a;
  b.kappa[1] = 1.0;
  auto f = net::CostFamily::mm1(2.0);
  double expected = 4.0 * (0.0 + f.eval(cached.update_payload()) - f.eval(1.0));
  CHECK(opt::objective(b, cached, 20) - opt::objective(a, cached, 20) == doctest::Approx(expected));
  CHECK(opt::grad_kappa(a, cached, 20, 1) == doctest::Approx(expected));
}

TEST_CASE("aggregate rate dominates each flow") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> flows(1 + trial % 4);
    for (auto& v : flows) v = u(rng);
    double mx = *std::max_element(flows.begin(), flows.end());
    for (double n : {2.0, 20.0, 200.0}) {
      double r = opt::coded_rate(flows, n);
      CHECK(r >= mx * (1 - 1e-12));
      CHECK(r <= mx * std::pow(flows.size(), 1.0 / n) * (1 + 1e-12));
    }
  }
  std::vector<double> huge{1e300, 1e300};
  CHECK(std::isfinite(opt::coded_rate(huge, 20)));
}

TEST_CASE("gradient special cases") {
  auto inst = single_edge(1.0, 2, "zero");
  FlowState s = FlowState::zeros(inst.network);
  s.mu[0] = 1.0;
  // One terminal: the norm factor is 1 and only the bracket remains.
  CHECK(opt::grad_mu(s, inst, 20, 0, 0) == doctest::Approx(2.0 * 2.0));
  s.kappa[1] = 1.0;
  CHECK(opt::grad_mu(s, inst, 20, 0, 0) == doctest::Approx(2.0));

  // Flow equal to the update payload with a free cache: caching is neutral.
  s.mu[0] = inst.update_payload();
  CHECK(opt::grad_kappa(s, inst, 20, 1) == doctest::Approx(0.0).epsilon(1e-12));
  auto pricey = relay("linear 100");
  FlowState p = FlowState::zeros(pricey.network);
  p.mu = {1.0, 1.0};
  CHECK(opt::grad_kappa(p, pricey, 20, 1) > 0);

  // Zero flow next to positive flow of another terminal.
  auto bf = test::preset("butterfly", 3.6, net::Scenario::no, net::CostFamily::zero());
  FlowState z = FlowState::zeros(bf.network);
  z.flow(1, 0) = 1.0;
  CHECK(opt::grad_mu(z, bf, 20, 0, 0) == 0.0);
  CHECK(opt::grad_mu(FlowState::zeros(bf.network), bf, 20, 0, 0) == 0.0);
}

TEST_CASE("gradients match finite differences") {
  std::mt19937_64 rng(77);
  for (const char* name : {"butterfly", "service", "cdn"}) {
    for (auto fam : {net::CostFamily::linear(1), net::CostFamily::quadratic(1)}) {
      auto inst = test::preset(name, test::preset_b(name), net::Scenario::all, fam);
      for (int trial = 0; trial < 20; ++trial) {
        auto err = test::fd_check(test::random_interior(inst, rng), inst, 20);
        CHECK(err.mu < 1e-5);
        CHECK(err.kappa < 1e-6);
      }
    }
  }
}

TEST_CASE("convex in flows, affine in cache variables") {
  std::mt19937_64 rng(8);
  auto inst = test::preset("cdn", 6.0, net::Scenario::all, net::CostFamily::quadratic(1));
  for (int trial = 0; trial < 50; ++trial) {
    FlowState a = test::random_interior(inst, rng), b = test::random_interior(inst, rng);
    b.kappa = a.kappa;
    FlowState mid = a;
    for (std::size_t i = 0; i < mid.mu.size(); ++i) mid.mu[i] = 0.5 * (a.mu[i] + b.mu[i]);
    double fa = opt::objective(a, inst, 20), fb = opt::objective(b, inst, 20);
    CHECK(opt::objective(mid, inst, 20) <= 0.5 * (fa + fb) + 1e-9 * std::abs(fa + fb));

    FlowState k0 = a, k1 = a, k2 = a;
    net::NodeId i = 1 + trial % (a.nodes - 1);
    k0.kappa[i] = 0.0;
    k1.kappa[i] = 0.5;
    k2.kappa[i] = 1.0;
    double second = opt::objective(k0, inst, 20) - 2 * opt::objective(k1, inst, 20) + opt::objective(k2, inst, 20);
    CHECK(std::abs(second) <= 1e-9 * std::abs(opt::objective(k1, inst, 20)));
  }
}

TEST_CASE("hand-built KKT point is a fixed point") {
  auto inst = relay("linear 50");
  FlowState s = FlowState::zeros(inst.network);
  s.mu = {1.0, 1.0};
  // Potentials drop by the marginal cost along each edge.
  s.p[1] = opt::grad_mu(s, inst, 20, 0, 0);
  s.p[2] = s.p[1] + opt::grad_mu(s, inst, 20, 0, 1);
  s.gamma_minus[1] = opt::grad_kappa(s, inst, 20, 1);
  REQUIRE(s.gamma_minus[1] > 0);
  SolverConfig cfg;
  FlowState next = opt::step(s, cfg, inst);
  CHECK(next.mu[0] == doctest::Approx(s.mu[0]).epsilon(1e-12));
  CHECK(next.mu[1] == doctest::Approx(s.mu[1]).epsilon(1e-12));
  CHECK(next.kappa[1] == 0.0);
  CHECK(next.p[1] == doctest::Approx(s.p[1]).epsilon(1e-12));
  CHECK(next.p[2] == doctest::Approx(s.p[2]).epsilon(1e-12));
  CHECK(next.gamma_minus[1] == doctest::Approx(s.gamma_minus[1]).epsilon(1e-12));
  CHECK(opt::kkt(s, inst, 20).residual() < 1e-9);
}

TEST_CASE("projected steps keep multipliers and primal bounds") {
  auto inst = test::preset("butterfly", 3.6, net::Scenario::edge_peer, net::CostFamily::linear(1));
  SolverConfig cfg;
  cfg.objective_scale = 50.0;
  FlowState s = opt::initial_state(inst, cfg);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (auto& l : s.lambda) l = u(rng);
  for (int it = 0; it < 10000; ++it) {
    s = opt::step(s, cfg, inst);
    bool ok = true;
    for (double v : s.lambda) ok = ok && v >= 0;
    for (double v : s.gamma_minus) ok = ok && v >= 0;
    for (double v : s.gamma_plus) ok = ok && v >= 0;
    for (double v : s.mu) ok = ok && v >= 0;
    for (double v : s.kappa) ok = ok && v >= 0 && v <= 1;
    REQUIRE(ok);
  }
}

TEST_CASE("solve converges and conserves flow") {
  auto inst = test::preset("butterfly", 3.6, net::Scenario::no, net::CostFamily::zero());
  SolverConfig cfg;
  auto res = opt::solve(inst, cfg);
  REQUIRE(res.converged);
  CHECK(res.final_kkt.residual() < 1e-3);
  CHECK(res.final_kkt.conservation < 1e-3);
  CHECK(res.trace.front().iteration == 0);
  CHECK(res.trace.back().iteration == res.iterations);
  // Conservation error ends far below where it peaks.
  double peak = 0;
  for (const auto& r : res.trace) peak = std::max(peak, r.conservation);
  CHECK(res.trace.back().conservation < 0.01 * peak);

  auto cached = test::preset("butterfly", 3.6, net::Scenario::edge_peer, net::CostFamily::zero());
  auto with_cache = opt::solve(cached, cfg);
  REQUIRE(with_cache.converged);
  CHECK(with_cache.psi < res.psi);

  auto tiny = test::preset("butterfly", 1e-3, net::Scenario::no, net::CostFamily::zero());
  auto small = opt::solve(tiny, cfg);
  CHECK(small.psi < 1e-3 * res.psi);

  SolverConfig none = cfg;
  none.max_iters = 0;
  auto idle = opt::solve(inst, none);
  CHECK(idle.iterations == 0);
  CHECK_FALSE(idle.converged);
  CHECK(idle.state.mu == opt::initial_state(inst, cfg).mu);

  auto over = test::preset("butterfly", 10.0, net::Scenario::no, net::CostFamily::zero());
  CHECK_THROWS_AS(opt::solve(over, cfg), std::invalid_argument);
}

TEST_CASE("rounding") {
  auto inst = test::preset("butterfly", 3.6, net::Scenario::all, net::CostFamily::zero());
  FlowState s = FlowState::zeros(inst.network);
  s.kappa = {0.0, 1.0, 0.0, 0.3, 0.75, 1.0, 0.5};
  SolverConfig cfg;
  std::vector<double> hits(s.nodes, 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    cfg.seed = static_cast<std::uint64_t>(d + 1);
    auto p = opt::round(s, cfg, inst);
    for (std::size_t i = 0; i < s.nodes; ++i) hits[i] += p.delta[i];
  }
  CHECK(hits[0] == 0);
  CHECK(hits[1] == draws);
  CHECK(hits[2] == 0);
  CHECK(hits[5] == draws);
  for (std::size_t i : {3u, 4u, 6u}) {
    double k = s.kappa[i];
    double se = std::sqrt(k * (1 - k) / draws);
    CHECK(std::abs(hits[i] / draws - k) < 3 * se);
  }

  auto pinned = test::preset("butterfly", 3.6, net::Scenario::edge, net::CostFamily::zero());
  FlowState q = FlowState::zeros(pinned.network);
  q.kappa.assign(q.nodes, 1.0);
  auto p = opt::round(q, cfg, pinned);
  CHECK(p.delta == std::vector<int>{0, 0, 0, 1, 1, 0, 0});
}

TEST_CASE("symbol dimensions") {
  auto inst = test::preset("butterfly", 4, net::Scenario::no, net::CostFamily::zero());
  inst.payload_mode = net::Instance::PayloadMode::bits;
  inst.bits_per_unit = std::log2(37.0);
  std::vector<double> sigma{0.0, 1.0, 1.0000001, 2.5, 3.999999, 0, 0, 0, 0};
  auto dims = opt::symbol_dims(sigma, inst);
  CHECK(dims[0] == 0);
  CHECK(dims[1] == 1);
  CHECK(dims[2] == 1);
  CHECK(dims[3] == 3);
  CHECK(dims[4] == 4);
}

TEST_CASE("average cache variables, service with linear cache cost") {
  auto inst = test::preset("service", 5.0, net::Scenario::no, net::CostFamily::zero());
  SolverConfig cfg;
  auto avg = opt::avg_kappa(inst, cfg, 4, net::CostFamily::linear(1));
  CHECK(avg.nonconverged.empty());
  CHECK(avg.mean[0] == 0.0);
  CHECK(avg.mean[1] > 0.9);
  CHECK(avg.mean[2] < 0.1);
  for (net::NodeId t : inst.network.destinations()) CHECK(avg.mean[t] > 0.95);
  auto again = opt::avg_kappa(inst, cfg, 4, net::CostFamily::linear(1));
  CHECK(again.mean == avg.mean);
}
