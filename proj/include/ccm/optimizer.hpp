#pragma once

// Relaxed rate / cache-placement optimization.
//
// Variables, per destination t and edge e = (i, j):
//   mu[t][e]     virtual flow of terminal t on e
//   lambda[t][e] multiplier of mu >= 0
//   p[t][i]      node potential (multiplier of flow conservation)
// and per node i:
//   kappa[i]     relaxed cache probability in [0, 1]
//   gamma_minus[i], gamma_plus[i]  multipliers of kappa >= 0, kappa <= 1
//
// The coded rate of an edge is the l^n aggregate of its virtual flows, and the
// objective charges round-1 transmission plus (M-1) rounds in which a caching
// node pays its cache cost and receives only update payloads on its in-edges.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ccm/network.hpp"

namespace ccm::opt {

using net::EdgeId;
using net::Instance;
using net::NodeId;

struct FlowState {
  std::size_t terminals = 0;
  std::size_t edges = 0;
  std::size_t nodes = 0;
  std::vector<double> mu;      // terminals * edges
  std::vector<double> lambda;  // terminals * edges
  std::vector<double> p;       // terminals * nodes
  std::vector<double> kappa;   // nodes
  std::vector<double> gamma_minus;
  std::vector<double> gamma_plus;

  static FlowState zeros(const net::Network& net);

  double& flow(std::size_t t, EdgeId e) { return mu[t * edges + e]; }
  double flow(std::size_t t, EdgeId e) const { return mu[t * edges + e]; }
  double potential(std::size_t t, NodeId i) const { return p[t * nodes + i]; }

  bool operator==(const FlowState&) const = default;
};

struct SolverConfig {
  enum class Init { fixed, random };

  double norm_exponent = 20.0;  // n
  // Gains of the mu, kappa and potential dynamics.
  double gain_mu = 1.0;
  double gain_kappa = 1.0;
  double gain_potential = 40.0;
  // Gains of the lambda / gamma dynamics; a non-positive value selects
  // 1/(eta^2 * primal gain), which settles a bound multiplier in one step.
  double gain_lambda = 0.0;
  double gain_gamma = 0.0;
  // Weight of the quadratic conservation penalty added to the mu dynamics;
  // it vanishes on feasible flows so equilibria are unchanged.
  double augmentation = 40.0;
  double step = 1e-3;  // eta
  long max_iters = 200000;
  double kkt_tol = 1e-3;
  long check_every = 100;
  long trace_every = 100;
  int rounding_trials = 1;
  std::uint64_t seed = 1;
  Init init = Init::fixed;
  // Start potentials and lambda from the initial marginal costs instead of 0.
  bool warm_duals = true;
  // Divide the objective by a positive constant chosen from the curvature at
  // the initial state so that eta * gain_mu * curvature is about 1/2. KKT
  // points do not move; multipliers are reported in unscaled units.
  bool auto_scale = true;
  // Objective divisor applied inside step(); set by solve() when auto_scale.
  double objective_scale = 1.0;

  double lambda_gain() const { return gain_lambda > 0 ? gain_lambda : 1.0 / (step * step * gain_mu); }
  double gamma_gain() const { return gain_gamma > 0 ? gain_gamma : 1.0 / (step * step * gain_kappa); }
  void validate() const;
};

// Aggregate coded rate sigma~ per edge, computed in max-factored form.
std::vector<double> coded_rates(const FlowState& s, double n);
double coded_rate(std::span<const double> flows, double n);

// Objective value; +inf when an M/M/1 edge is loaded at or beyond capacity.
double objective(const FlowState& s, const Instance& inst, double n);
double grad_mu(const FlowState& s, const Instance& inst, double n, std::size_t t, EdgeId e);
double grad_kappa(const FlowState& s, const Instance& inst, double n, NodeId i);

struct Gradient {
  double psi = 0.0;
  std::vector<double> mu;     // terminals * edges
  std::vector<double> kappa;  // nodes
};
Gradient evaluate(const FlowState& s, const Instance& inst, double n);

// Net outflow y[t][i] and its target theta[t][i] (B at the source, -B at t).
std::vector<double> net_outflow(const FlowState& s, const Instance& inst);
double demand(const Instance& inst, std::size_t t, NodeId i);

struct KktReport {
  double stationarity_mu = 0.0;    // relative to the largest |dPsi/dmu|
  double stationarity_kappa = 0.0; // relative to the largest |dPsi/dkappa|
  double conservation = 0.0;       // max |y - theta| / B
  double conservation_l1 = 0.0;    // sum |y - theta|
  double feasibility = 0.0;        // bound violations of primal and duals
  double slackness_mu = 0.0;       // max mu * lambda, normalised
  double slackness_kappa = 0.0;    // max kappa*gamma-, (1-kappa)*gamma+, normalised
  double residual() const;
};
KktReport kkt(const FlowState& s, const Instance& inst, double n);

// Quadratic Lyapunov function for constant gains, relative to `ref`.
double lyapunov(const FlowState& s, const FlowState& ref, const SolverConfig& cfg);

FlowState initial_state(const Instance& inst, const SolverConfig& cfg);

// One forward-Euler step of the primal-dual dynamics. Primal variables are
// advanced first; the multiplier updates see the unclamped primal values,
// then mu is clamped to >= 0 and kappa to [0, 1]. Throws
// std::runtime_error if a non-finite value appears.
FlowState step(const FlowState& s, const SolverConfig& cfg, const Instance& inst);

struct TraceRow {
  long iteration = 0;
  double psi = 0.0;
  double conservation = 0.0;
  double stationarity = 0.0;
  double kkt = 0.0;
  double lyapunov = 0.0;
  double step = 0.0;
};

struct SolveResult {
  FlowState state;
  std::vector<TraceRow> trace;
  KktReport final_kkt;
  double psi = 0.0;
  long iterations = 0;
  bool converged = false;
  std::string diagnostic;
};

// Largest diagonal second derivative of the objective over interior flows.
double flow_curvature(const FlowState& s, const Instance& inst, double n);

// Requires B below every destination min-cut.
SolveResult solve(const Instance& inst, const SolverConfig& cfg);

struct Placement {
  std::vector<int> delta;           // per node
  std::vector<double> sigma_hat;    // per edge, rate units
  std::vector<std::size_t> dims;    // per edge, field symbols per round
};

// Independent Bernoulli(kappa_i) draws on cache-eligible nodes, and symbol
// counts ceil(sigma_hat * bits_per_unit / log2 q).
Placement round(const FlowState& s, const SolverConfig& cfg, const Instance& inst);

std::vector<std::size_t> symbol_dims(std::span<const double> sigma_hat, const Instance& inst);

struct KappaAverage {
  std::vector<double> mean;        // per node
  std::vector<double> stddev;      // per node
  std::vector<int> nonconverged;   // run indices
  int runs = 0;
};

// Solves `runs` times with seeds cfg.seed, cfg.seed+1, ... and random
// initialisation, with every non-source node cache-eligible under `family`.
KappaAverage avg_kappa(const Instance& inst, const SolverConfig& cfg, int runs, const net::CostFamily& family);

}  // namespace ccm::opt
