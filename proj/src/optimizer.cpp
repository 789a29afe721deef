#include "ccm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <memory>
#include <random>
#include <stdexcept>

namespace ccm::opt {

namespace {

double clamp_finite(double v) {
  if (std::isnan(v)) return v;
  return std::clamp(v, -net::kBarrierSlope, net::kBarrierSlope);
}

double project(double y, double x) { return x > 0 ? y : std::max(y, 0.0); }

// Per-node sum of outgoing coded rates (the cached output length).
std::vector<double> node_rates(const net::Network& net, const std::vector<double>& sigma) {
  std::vector<double> out(net.node_count(), 0.0);
  for (EdgeId e = 0; e < net.edge_count(); ++e) out[net.edge(e).from] += sigma[e];
  return out;
}

}  // namespace

FlowState FlowState::zeros(const net::Network& net) {
  FlowState s;
  s.terminals = net.destination_count();
  s.edges = net.edge_count();
  s.nodes = net.node_count();
  s.mu.assign(s.terminals * s.edges, 0.0);
  s.lambda.assign(s.terminals * s.edges, 0.0);
  s.p.assign(s.terminals * s.nodes, 0.0);
  s.kappa.assign(s.nodes, 0.0);
  s.gamma_minus.assign(s.nodes, 0.0);
  s.gamma_plus.assign(s.nodes, 0.0);
  return s;
}

void SolverConfig::validate() const {
  if (norm_exponent < 2 || std::fmod(norm_exponent, 2.0) != 0.0)
    throw std::invalid_argument("norm exponent must be an even number >= 2");
  for (double g : {gain_mu, gain_kappa, gain_potential})
    if (!(g > 0)) throw std::invalid_argument("gains must be positive");
  if (augmentation < 0) throw std::invalid_argument("augmentation must be non-negative");
  if (!(step > 0)) throw std::invalid_argument("step size must be positive");
  if (max_iters < 0) throw std::invalid_argument("max iterations must be non-negative");
  if (!(kkt_tol > 0)) throw std::invalid_argument("KKT tolerance must be positive");
  if (check_every < 1 || trace_every < 1) throw std::invalid_argument("check/trace intervals must be >= 1");
  if (rounding_trials < 1) throw std::invalid_argument("rounding trials must be >= 1");
  if (!(objective_scale > 0)) throw std::invalid_argument("objective scale must be positive");
}

double coded_rate(std::span<const double> flows, double n) {
  double top = 0.0;
  for (double v : flows) top = std::max(top, v);
  if (top <= 0.0) return 0.0;
  double acc = 0.0;
  for (double v : flows) acc += std::pow(std::max(v, 0.0) / top, n);
  return top * std::pow(acc, 1.0 / n);
}

std::vector<double> coded_rates(const FlowState& s, double n) {
  std::vector<double> sigma(s.edges);
  std::vector<double> col(s.terminals);
  for (EdgeId e = 0; e < s.edges; ++e) {
    for (std::size_t t = 0; t < s.terminals; ++t) col[t] = s.flow(t, e);
    sigma[e] = coded_rate(col, n);
  }
  return sigma;
}

Gradient evaluate(const FlowState& s, const Instance& inst, double n) {
  const auto& net = inst.network;
  const double rest = static_cast<double>(inst.rounds - 1);
  const double u = inst.update_payload();
  auto sigma = coded_rates(s, n);
  auto sigma_node = node_rates(net, sigma);

  Gradient g;
  g.mu.assign(s.mu.size(), 0.0);
  g.kappa.assign(s.nodes, 0.0);

  double psi = 0.0;
  for (EdgeId e = 0; e < net.edge_count(); ++e) psi += net.edge(e).cost.eval(sigma[e]);
  double later = 0.0;
  for (NodeId i = 1; i < net.node_count(); ++i) {
    double k = s.kappa[i];
    double full = 0.0, update = 0.0;
    for (EdgeId e : net.in_edges(i)) {
      full += net.edge(e).cost.eval(sigma[e]);
      update += net.edge(e).cost.eval(u);
    }
    double cache = net.node(i).cache_cost.eval(sigma_node[i]);
    // Skip zero-weighted terms so an infinite cost does not produce NaN.
    if (k < 1.0) later += (1.0 - k) * full;
    if (k > 0.0) later += k * (cache + update);
    g.kappa[i] = clamp_finite(rest * (cache + update - full));
  }
  g.psi = psi + rest * later;

  for (EdgeId e = 0; e < net.edge_count(); ++e) {
    if (sigma[e] <= 0.0) continue;
    const auto& ed = net.edge(e);
    double bracket = ed.cost.deriv(sigma[e]) * (1.0 + rest * (1.0 - s.kappa[ed.to]));
    if (ed.from != net.source()) bracket += rest * s.kappa[ed.from] * net.node(ed.from).cache_cost.deriv(sigma_node[ed.from]);
    for (std::size_t t = 0; t < s.terminals; ++t) {
      double ratio = s.flow(t, e) / sigma[e];
      g.mu[t * s.edges + e] = ratio > 0 ? std::pow(ratio, n - 1.0) * bracket : 0.0;
    }
  }
  return g;
}

double objective(const FlowState& s, const Instance& inst, double n) { return evaluate(s, inst, n).psi; }

double grad_mu(const FlowState& s, const Instance& inst, double n, std::size_t t, EdgeId e) {
  return evaluate(s, inst, n).mu[t * s.edges + e];
}

double grad_kappa(const FlowState& s, const Instance& inst, double n, NodeId i) {
  return evaluate(s, inst, n).kappa[i];
}

double demand(const Instance& inst, std::size_t t, NodeId i) {
  const auto& net = inst.network;
  if (i == net.source()) return inst.frame_size;
  if (net.is_destination(i) && net.destination_index(i) == t) return -inst.frame_size;
  return 0.0;
}

std::vector<double> net_outflow(const FlowState& s, const Instance& inst) {
  const auto& net = inst.network;
  std::vector<double> y(s.terminals * s.nodes, 0.0);
  for (std::size_t t = 0; t < s.terminals; ++t) {
    for (EdgeId e = 0; e < s.edges; ++e) {
      double f = s.flow(t, e);
      y[t * s.nodes + net.edge(e).from] += f;
      y[t * s.nodes + net.edge(e).to] -= f;
    }
  }
  return y;
}

double KktReport::residual() const {
  return std::max({stationarity_mu, stationarity_kappa, conservation, feasibility, slackness_mu, slackness_kappa});
}

KktReport kkt(const FlowState& s, const Instance& inst, double n) {
  const auto& net = inst.network;
  Gradient g = evaluate(s, inst, n);
  auto y = net_outflow(s, inst);
  const double B = inst.frame_size;

  double scale_mu = 1.0;
  for (double v : g.mu) scale_mu = std::max(scale_mu, std::abs(v));
  double scale_kappa = 1.0;
  for (NodeId i = 1; i < s.nodes; ++i)
    if (net.node(i).cache_eligible) scale_kappa = std::max(scale_kappa, std::abs(g.kappa[i]));

  KktReport r;
  for (std::size_t t = 0; t < s.terminals; ++t) {
    for (EdgeId e = 0; e < s.edges; ++e) {
      std::size_t idx = t * s.edges + e;
      const auto& ed = net.edge(e);
      double q = s.potential(t, ed.from) - s.potential(t, ed.to);
      r.stationarity_mu = std::max(r.stationarity_mu, std::abs(g.mu[idx] + q - s.lambda[idx]) / scale_mu);
      r.feasibility = std::max({r.feasibility, -s.mu[idx] / B, -s.lambda[idx] / scale_mu});
      r.slackness_mu = std::max(r.slackness_mu, std::abs(s.mu[idx] * s.lambda[idx]) / (B * scale_mu));
    }
    for (NodeId i = 0; i < s.nodes; ++i) {
      double v = std::abs(y[t * s.nodes + i] - demand(inst, t, i));
      r.conservation = std::max(r.conservation, v / B);
      r.conservation_l1 += v;
    }
  }
  for (NodeId i = 1; i < s.nodes; ++i) {
    if (!net.node(i).cache_eligible) continue;
    double k = s.kappa[i];
    r.stationarity_kappa =
        std::max(r.stationarity_kappa, std::abs(g.kappa[i] + s.gamma_plus[i] - s.gamma_minus[i]) / scale_kappa);
    r.feasibility = std::max({r.feasibility, -k, k - 1.0, -s.gamma_minus[i] / scale_kappa, -s.gamma_plus[i] / scale_kappa});
    r.slackness_kappa = std::max({r.slackness_kappa, std::abs(k * s.gamma_minus[i]) / scale_kappa,
                                  std::abs((1.0 - k) * s.gamma_plus[i]) / scale_kappa});
  }
  return r;
}

double lyapunov(const FlowState& s, const FlowState& ref, const SolverConfig& cfg) {
  auto sq = [](const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return 0.5 * acc;
  };
  return sq(s.mu, ref.mu) / cfg.gain_mu + sq(s.lambda, ref.lambda) / cfg.lambda_gain() +
         sq(s.p, ref.p) / cfg.gain_potential + sq(s.kappa, ref.kappa) / cfg.gain_kappa +
         (sq(s.gamma_minus, ref.gamma_minus) + sq(s.gamma_plus, ref.gamma_plus)) / cfg.gamma_gain();
}

FlowState initial_state(const Instance& inst, const SolverConfig& cfg) {
  const auto& net = inst.network;
  FlowState s = FlowState::zeros(net);
  std::vector<double> cap;
  for (const auto& e : net.edges()) cap.push_back(e.capacity);
  // Each terminal's flow is a maximum flow scaled down to carry exactly B.
  for (NodeId t : net.destinations()) {
    auto mf = net::max_flow(net, cap, t);
    std::size_t ti = net.destination_index(t);
    if (mf.value <= 0) continue;
    double scale = inst.frame_size / mf.value;
    for (EdgeId e = 0; e < net.edge_count(); ++e) s.flow(ti, e) = scale * mf.edge_flow[e];
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (NodeId i = 1; i < net.node_count(); ++i) {
    if (!net.node(i).cache_eligible) continue;
    s.kappa[i] = cfg.init == SolverConfig::Init::random ? unit(rng) : 0.5;
  }
  if (!cfg.warm_duals) return s;

  // Potentials: shortest-path distances from the source under the initial
  // marginal costs, so that flow on shortest routes starts stationary.
  Gradient g = evaluate(s, inst, cfg.norm_exponent);
  for (std::size_t t = 0; t < s.terminals; ++t) {
    std::vector<double> dist(s.nodes, net::kInfeasible);
    dist[net.source()] = 0.0;
    for (NodeId i : net.topological_order()) {
      if (dist[i] == net::kInfeasible) continue;
      for (EdgeId e : net.out_edges(i))
        dist[net.edge(e).to] = std::min(dist[net.edge(e).to], dist[i] + g.mu[t * s.edges + e]);
    }
    for (NodeId i = 0; i < s.nodes; ++i) s.p[t * s.nodes + i] = dist[i];
    for (EdgeId e = 0; e < s.edges; ++e) {
      const auto& ed = net.edge(e);
      double slack = g.mu[t * s.edges + e] + dist[ed.from] - dist[ed.to];
      s.lambda[t * s.edges + e] = std::max(0.0, slack);
    }
  }
  return s;
}

FlowState step(const FlowState& s, const SolverConfig& cfg, const Instance& inst) {
  const auto& net = inst.network;
  const double eta = cfg.step;
  const double lambda_gain = cfg.lambda_gain();
  const double gamma_gain = cfg.gamma_gain();
  Gradient g = evaluate(s, inst, cfg.norm_exponent);
  for (double& v : g.mu) v /= cfg.objective_scale;
  for (double& v : g.kappa) v /= cfg.objective_scale;
  auto y = net_outflow(s, inst);

  FlowState next = s;
  for (std::size_t t = 0; t < s.terminals; ++t) {
    for (EdgeId e = 0; e < s.edges; ++e) {
      const std::size_t idx = t * s.edges + e;
      const auto& ed = net.edge(e);
      double q = s.potential(t, ed.from) - s.potential(t, ed.to);
      double violation_from = y[t * s.nodes + ed.from] - demand(inst, t, ed.from);
      double violation_to = y[t * s.nodes + ed.to] - demand(inst, t, ed.to);
      double drift = -g.mu[idx] - q + s.lambda[idx] - cfg.augmentation * (violation_from - violation_to);
      double pre = s.mu[idx] + eta * cfg.gain_mu * drift;
      next.lambda[idx] = std::max(0.0, s.lambda[idx] + eta * lambda_gain * project(-pre, s.lambda[idx]));
      next.mu[idx] = std::max(0.0, pre);
    }
  }
  for (NodeId i = 1; i < s.nodes; ++i) {
    if (!net.node(i).cache_eligible) {
      next.kappa[i] = 0.0;
      continue;
    }
    double drift = -g.kappa[i] - s.gamma_plus[i] + s.gamma_minus[i];
    double pre = s.kappa[i] + eta * cfg.gain_kappa * drift;
    next.gamma_minus[i] = std::max(0.0, s.gamma_minus[i] + eta * gamma_gain * project(-pre, s.gamma_minus[i]));
    next.gamma_plus[i] = std::max(0.0, s.gamma_plus[i] + eta * gamma_gain * project(pre - 1.0, s.gamma_plus[i]));
    next.kappa[i] = std::clamp(pre, 0.0, 1.0);
  }
  auto y_next = net_outflow(next, inst);
  for (std::size_t t = 0; t < s.terminals; ++t)
    for (NodeId i = 0; i < s.nodes; ++i)
      next.p[t * s.nodes + i] += eta * cfg.gain_potential * (y_next[t * s.nodes + i] - demand(inst, t, i));

  for (const auto* v : {&next.mu, &next.lambda, &next.p, &next.kappa, &next.gamma_minus, &next.gamma_plus})
    for (double x : *v)
      if (!std::isfinite(x)) throw std::runtime_error("non-finite value in primal-dual step (step size too large?)");
  return next;
}

double flow_curvature(const FlowState& s, const Instance& inst, double n) {
  Gradient base = evaluate(s, inst, n);
  double curvature = 0.0;
  FlowState probe = s;
  // Backward differences on interior flows only: the aggregate rate has a
  // kink where every terminal's flow on an edge is zero.
  const double h = 1e-4 * inst.frame_size;
  for (std::size_t idx = 0; idx < s.mu.size(); ++idx) {
    if (s.mu[idx] <= 2.0 * h) continue;
    probe.mu[idx] = s.mu[idx] - h;
    double bumped = evaluate(probe, inst, n).mu[idx];
    probe.mu[idx] = s.mu[idx];
    if (std::isfinite(bumped)) curvature = std::max(curvature, (base.mu[idx] - bumped) / h);
  }
  return curvature;
}

namespace {

void scale_duals(FlowState& s, double factor) {
  for (auto* v : {&s.lambda, &s.p, &s.gamma_minus, &s.gamma_plus})
    for (double& x : *v) x *= factor;
}

}  // namespace

SolveResult solve(const Instance& inst, const SolverConfig& cfg_in) {
  inst.validate();
  inst.require_capacity_headroom();
  cfg_in.validate();
  SolverConfig cfg = cfg_in;
  const double n = cfg.norm_exponent;
  constexpr double kMinStep = 1e-12;
  constexpr double kTargetFraction = 0.5;

  SolveResult out;
  FlowState s = initial_state(inst, cfg);
  const double base_step = cfg.step;
  auto scale_for = [&](double curvature) {
    return curvature > 0 ? curvature * base_step * cfg.gain_mu / kTargetFraction : 1.0;
  };
  if (cfg.auto_scale) {
    // Cache decisions reweight the edge terms, so bound over both extremes.
    double curvature = 0.0;
    for (double k : {0.0, 1.0}) {
      FlowState probe = s;
      for (NodeId i = 0; i < s.nodes; ++i)
        if (inst.network.node(i).cache_eligible) probe.kappa[i] = k;
      curvature = std::max(curvature, flow_curvature(probe, inst, n));
    }
    cfg.objective_scale = scale_for(curvature);
  }
  scale_duals(s, 1.0 / cfg.objective_scale);
  std::vector<FlowState> snapshots;

  // Internally the multipliers live in units of the scaled objective.
  auto unscaled = [&](const FlowState& st) {
    FlowState u = st;
    scale_duals(u, cfg.objective_scale);
    return u;
  };
  auto rescale = [&](FlowState& st) {
    double wanted = scale_for(flow_curvature(st, inst, n));
    if (wanted <= cfg.objective_scale) return;
    scale_duals(st, cfg.objective_scale / wanted);
    cfg.objective_scale = wanted;
  };
  auto record = [&](long it, const FlowState& scaled) {
    FlowState st = unscaled(scaled);
    KktReport k = kkt(st, inst, n);
    TraceRow row;
    row.iteration = it;
    row.psi = objective(st, inst, n);
    row.conservation = k.conservation_l1;
    row.stationarity = std::max(k.stationarity_mu, k.stationarity_kappa);
    row.kkt = k.residual();
    row.step = cfg.step;
    out.trace.push_back(row);
    snapshots.push_back(st);
    return k;
  };

  KktReport report = record(0, s);
  constexpr long kRecoverAfter = 1000;
  long accepted_since_halving = 0;
  long it = 0;
  bool done = report.residual() < cfg.kkt_tol;
  while (!done && it < cfg.max_iters) {
    FlowState next;
    try {
      next = step(s, cfg, inst);
    } catch (const std::runtime_error&) {
      next = s;
      next.mu.clear();
    }
    if (next.mu.empty() || !std::isfinite(objective(next, inst, n))) {
      // Left the cost domain or blew up: retry the step with half the size.
      cfg.step *= 0.5;
      accepted_since_halving = 0;
      if (cfg.step < kMinStep) {
        out.diagnostic = "step size underflow: dynamics diverge";
        break;
      }
      continue;
    }
    s = std::move(next);
    ++it;
    if (cfg.step < base_step && ++accepted_since_halving >= kRecoverAfter) {
      cfg.step = std::min(base_step, 2.0 * cfg.step);
      accepted_since_halving = 0;
    }
    bool traced = it % cfg.trace_every == 0;
    if (it % cfg.check_every == 0 || traced || it == cfg.max_iters) {
      report = traced || it == cfg.max_iters ? record(it, s) : kkt(unscaled(s), inst, n);
      done = report.residual() < cfg.kkt_tol;
      if (done && !traced && it != cfg.max_iters) record(it, s);
      if (!done && cfg.auto_scale) rescale(s);
    }
  }
  if (out.trace.back().iteration != it) report = record(it, s);

  s = unscaled(s);
  for (std::size_t r = 0; r < out.trace.size(); ++r) out.trace[r].lyapunov = lyapunov(snapshots[r], s, cfg);
  out.final_kkt = report;
  out.psi = objective(s, inst, n);
  out.iterations = it;
  out.converged = report.residual() < cfg.kkt_tol;
  if (!out.converged && out.diagnostic.empty()) {
    out.diagnostic = "KKT residual " + std::to_string(report.residual()) + " above tolerance after " +
                     std::to_string(it) + " iterations";
  }
  out.state = std::move(s);
  return out;
}

std::vector<std::size_t> symbol_dims(std::span<const double> sigma_hat, const Instance& inst) {
  // Absorbs solver round-off so that e.g. 2.0000001 symbols count as 2.
  constexpr double kSlack = 1e-6;
  const double per_symbol = inst.bits_per_symbol();
  std::vector<std::size_t> dims;
  for (double r : sigma_hat) {
    double symbols = r * inst.bits_per_unit / per_symbol;
    dims.push_back(symbols <= kSlack ? 0 : static_cast<std::size_t>(std::ceil(symbols - kSlack)));
  }
  return dims;
}

Placement round(const FlowState& s, const SolverConfig& cfg, const Instance& inst) {
  const auto& net = inst.network;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  Placement best;
  best.sigma_hat = coded_rates(s, cfg.norm_exponent);
  best.dims = symbol_dims(best.sigma_hat, inst);
  double best_cost = net::kInfeasible;
  for (int trial = 0; trial < cfg.rounding_trials; ++trial) {
    std::vector<int> delta(net.node_count(), 0);
    for (NodeId i = 1; i < net.node_count(); ++i) {
      if (!net.node(i).cache_eligible) continue;
      delta[i] = unit(rng) < s.kappa[i] ? 1 : 0;
    }
    if (cfg.rounding_trials == 1) {
      best.delta = std::move(delta);
      break;
    }
    // Several draws: keep the one with the lowest relaxed cost at kappa = delta.
    FlowState probe = s;
    for (NodeId i = 0; i < net.node_count(); ++i) probe.kappa[i] = delta[i];
    double cost = objective(probe, inst, cfg.norm_exponent);
    if (best.delta.empty() || cost < best_cost) {
      best_cost = cost;
      best.delta = std::move(delta);
    }
  }
  return best;
}

KappaAverage avg_kappa(const Instance& inst, const SolverConfig& cfg, int runs, const net::CostFamily& family) {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  const auto& net = inst.network;
  std::unique_ptr<bool[]> eligible(new bool[net.node_count()]);
  for (NodeId i = 0; i < net.node_count(); ++i) eligible[i] = i != net.source();
  Instance open = inst;
  open.network = net.with_caches(std::span<const bool>(eligible.get(), net.node_count()), family);

  std::vector<std::future<SolveResult>> jobs;
  for (int r = 0; r < runs; ++r) {
    SolverConfig c = cfg;
    c.seed = cfg.seed + static_cast<std::uint64_t>(r);
    c.init = SolverConfig::Init::random;
    jobs.push_back(std::async(std::launch::async, [open, c] { return solve(open, c); }));
  }

  KappaAverage out;
  out.runs = runs;
  out.mean.assign(net.node_count(), 0.0);
  out.stddev.assign(net.node_count(), 0.0);
  std::vector<std::vector<double>> samples;
  for (int r = 0; r < runs; ++r) {
    SolveResult res = jobs[r].get();
    if (!res.converged) out.nonconverged.push_back(r);
    samples.push_back(res.state.kappa);
  }
  for (NodeId i = 0; i < net.node_count(); ++i) {
    double sum = 0.0;
    for (const auto& k : samples) sum += k[i];
    double mean = sum / runs;
    double var = 0.0;
    for (const auto& k : samples) var += (k[i] - mean) * (k[i] - mean);
    out.mean[i] = mean;
    out.stddev[i] = runs > 1 ? std::sqrt(var / (runs - 1)) : 0.0;
  }
  return out;
}

}  // namespace ccm::opt
