#pragma once

// Forward steady-state solver: given roughness, demands and source heads,
// find pipe flows Q and piezometric heads H = h + z with
//   A Q = q,   h_loss(Q) + A^T H = C_s h_s.
// Newton on the full (Q, H) system with a backtracking damping on the
// residual 2-norm.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "hydrocal/error.hpp"
#include "hydrocal/friction.hpp"
#include "hydrocal/measurement.hpp"
#include "hydrocal/network.hpp"
#include "hydrocal/rng.hpp"
#include "hydrocal/topology.hpp"

namespace hydrocal {

struct LoadingCondition {
  Vector demands;       // per inner node, m^3/s, >= 0
  Vector source_heads;  // per source, m, >= 0
};

struct SteadyStateSolution {
  Vector flows;           // per pipe, m^3/s
  Vector pressure_heads;  // per inner node, m
  Vector reynolds;        // per pipe
  int iterations = 0;
  double residual_norm = 0.0;  // L-inf over mass and energy equations
};

struct SteadyStateOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

/// Below this flow the head-loss slope is floored so the Jacobian stays regular.
inline constexpr double kFlowFloor = 1e-8;  // m^3/s

struct HeadLossEval {
  double headloss;  // m
  double slope;     // d headloss / dQ
};

/// Darcy-Weisbach head loss with the Colebrook-White factor. Below Re = 4000
/// the friction factor is frozen at its Re = 4000 value, which keeps the law
/// monotone through zero flow while the iteration passes through small flows;
/// converged states are checked separately for turbulence.
inline HeadLossEval forward_headloss(double flow, const PipeHydraulics& pipe,
                                     const FluidProperties& fluid) {
  const double re = reynolds(flow, pipe, fluid);
  if (re >= kTurbulentReynolds) {
    const double lambda = friction_factor_cw(re, pipe.roughness, pipe.diameter);
    const double dh = headloss_dw(flow, lambda, pipe.resistance);
    const double p = d_flow_d_headloss(pipe.roughness, dh, pipe, fluid);
    const double slope = p > 0.0 ? 1.0 / p : 2.0 * lambda * pipe.resistance * std::abs(flow);
    return {dh, slope};
  }
  const double lambda = friction_factor_cw(kTurbulentReynolds, pipe.roughness, pipe.diameter);
  return {headloss_dw(flow, lambda, pipe.resistance),
          2.0 * lambda * pipe.resistance * (std::abs(flow) + kFlowFloor)};
}

inline void check_load(const Network& net, const LoadingCondition& load) {
  if (static_cast<std::size_t>(load.demands.size()) != net.n_inner())
    throw DimensionError("demand vector has " + std::to_string(load.demands.size()) +
                         " entries, network has " + std::to_string(net.n_inner()) + " inner nodes");
  if (static_cast<std::size_t>(load.source_heads.size()) != net.n_sources())
    throw DimensionError("source head vector has " + std::to_string(load.source_heads.size()) +
                         " entries, network has " + std::to_string(net.n_sources()) + " sources");
  if ((load.demands.array() < 0.0).any()) throw DomainError("demands must be non-negative");
  if ((load.source_heads.array() < 0.0).any()) throw DomainError("source heads must be non-negative");
}

inline SteadyStateSolution solve_steady_state(const Network& net, const LoadingCondition& load,
                                              const SteadyStateOptions& opts = {}) {
  if (!(opts.tolerance > 0.0)) throw DomainError("tolerance must be positive");
  if (!net.all_roughness_set()) throw NetworkError("forward solve needs a roughness on every pipe");
  check_load(net, load);
  const TopologyMatrices topo = build_incidence(net);

  const Eigen::Index nj = static_cast<Eigen::Index>(net.n_inner());
  const Eigen::Index nl = static_cast<Eigen::Index>(net.n_pipes());
  const Matrix a = topo.incidence.cast<double>();
  const Vector fixed = topo.source_incidence.cast<double>() * load.source_heads;
  const FluidProperties& fluid = net.fluid();
  std::vector<PipeHydraulics> pipes;
  pipes.reserve(net.n_pipes());
  for (const Pipe& p : net.pipes()) pipes.emplace_back(p, fluid);

  Vector slope(nl);
  auto residual = [&](const Vector& q, const Vector& head, bool want_slope) {
    Vector r(nj + nl);
    r.head(nj) = a * q - load.demands;
    for (Eigen::Index p = 0; p < nl; ++p) {
      const HeadLossEval e = forward_headloss(q(p), pipes[static_cast<std::size_t>(p)], fluid);
      r(nj + p) = e.headloss;
      if (want_slope) slope(p) = e.slope;
    }
    r.tail(nl) += a.transpose() * head - fixed;
    return r;
  };

  // Minimum-norm mass-consistent flows, then heads from the least-squares
  // energy balance at those flows.
  const Matrix aat = a * a.transpose();
  const Eigen::PartialPivLU<Matrix> aat_lu(aat);
  Vector q = a.transpose() * aat_lu.solve(load.demands);
  Vector losses(nl);
  for (Eigen::Index p = 0; p < nl; ++p)
    losses(p) = forward_headloss(q(p), pipes[static_cast<std::size_t>(p)], fluid).headloss;
  Vector head = aat_lu.solve(a * (fixed - losses));

  Vector r = residual(q, head, true);
  double norm_inf = r.lpNorm<Eigen::Infinity>();
  Matrix jac = Matrix::Zero(nj + nl, nj + nl);
  jac.topLeftCorner(nj, nl) = a;
  jac.bottomRightCorner(nl, nj) = a.transpose();

  int it = 0;
  while (norm_inf > opts.tolerance) {
    if (it >= opts.max_iterations)
      throw NumericError("steady-state solver did not converge in " +
                         std::to_string(opts.max_iterations) + " iterations (residual " +
                         std::to_string(norm_inf) + ")");
    ++it;
    jac.bottomLeftCorner(nl, nl) = slope.asDiagonal();
    const Vector step = jac.partialPivLu().solve(-r);
    if (!step.allFinite()) throw NumericError("steady-state Newton step is not finite");

    const double norm0 = r.norm();
    double mu = 1.0;
    Vector q_new, head_new, r_new;
    for (int bt = 0; bt < 40; ++bt) {
      q_new = q + mu * step.head(nl);
      head_new = head + mu * step.tail(nj);
      r_new = residual(q_new, head_new, false);
      if (r_new.allFinite() && r_new.norm() < (1.0 - 1e-4 * mu) * norm0) break;
      mu *= 0.5;
    }
    q = std::move(q_new);
    head = std::move(head_new);
    r = residual(q, head, true);
    norm_inf = r.lpNorm<Eigen::Infinity>();
  }

  SteadyStateSolution sol;
  sol.flows = q;
  const auto z = net.elevations();
  sol.pressure_heads = head - Eigen::Map<const Vector>(z.data(), nj);
  sol.reynolds.resize(nl);
  for (Eigen::Index p = 0; p < nl; ++p)
    sol.reynolds(p) = reynolds(q(p), pipes[static_cast<std::size_t>(p)], fluid);
  sol.iterations = it;
  sol.residual_norm = norm_inf;
  return sol;
}

struct RegimeFlag {
  std::size_t pipe;
  std::string pipe_id;
  double reynolds;
};

/// Pipes whose Reynolds number is below the turbulent threshold; empty means
/// every pipe is turbulent.
inline std::vector<RegimeFlag> check_turbulence(const SteadyStateSolution& sol, const Network& net) {
  std::vector<RegimeFlag> out;
  for (std::size_t p = 0; p < net.n_pipes(); ++p) {
    const double re = sol.reynolds(static_cast<Eigen::Index>(p));
    if (re < kTurbulentReynolds) out.push_back({p, net.pipe(p).id, re});
  }
  return out;
}

struct NoiseOptions {
  double sigma = 0.0;  // m, standard deviation added to sensed heads
  std::uint64_t seed = 0;
};

struct GeneratedMeasurements {
  std::vector<MeasurementSet> sets;
  std::vector<SteadyStateSolution> solutions;
  std::vector<std::string> warnings;
};

/// Solves every load and records the sensed pressure heads, optionally with
/// zero-mean Gaussian noise. Laminar/transitional pipes produce a warning.
inline GeneratedMeasurements generate_measurement_sets(const Network& net,
                                                       const std::vector<LoadingCondition>& loads,
                                                       const SensorConfig& sensors,
                                                       const NoiseOptions& noise = {},
                                                       const SteadyStateOptions& opts = {}) {
  if (!(noise.sigma >= 0.0)) throw DomainError("noise standard deviation must be non-negative");
  GeneratedMeasurements out;
  SplitMix64 rng(noise.seed);
  for (std::size_t i = 0; i < loads.size(); ++i) {
    SteadyStateSolution sol = solve_steady_state(net, loads[i], opts);
    for (const RegimeFlag& f : check_turbulence(sol, net))
      out.warnings.push_back("set " + std::to_string(i + 1) + ": pipe '" + f.pipe_id +
                             "' is not turbulent (Re = " + std::to_string(f.reynolds) + ")");
    MeasurementSet m;
    m.demands = loads[i].demands;
    m.source_heads = loads[i].source_heads;
    m.sensed_heads.resize(static_cast<Eigen::Index>(sensors.n_measured()));
    for (std::size_t r = 0; r < sensors.n_measured(); ++r) {
      double y = sol.pressure_heads(static_cast<Eigen::Index>(sensors.measured()[r]));
      if (noise.sigma > 0.0) y += noise.sigma * rng.normal();
      m.sensed_heads(static_cast<Eigen::Index>(r)) = y;
    }
    out.sets.push_back(std::move(m));
    out.solutions.push_back(std::move(sol));
  }
  return out;
}

}  // namespace hydrocal
