#pragma once

// Per-pipe turbulent friction: Reynolds number, Colebrook-White friction
// factor, Darcy-Weisbach head loss, and the explicit flow Q = f_t(eps, dh)
// obtained by eliminating the friction factor, with its two partials.
//
// Units are SI throughout: Q in m^3/s, head loss and roughness in m.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hydrocal/error.hpp"
#include "hydrocal/network.hpp"

namespace hydrocal {

inline constexpr double kTurbulentReynolds = 4000.0;

namespace detail {
inline const double kLn10 = std::log(10.0);
inline constexpr double kCwRough = 3.7;
inline constexpr double kCwSmooth = 2.51;

inline double sign_of(double v) noexcept { return (v > 0.0) - (v < 0.0); }
}  // namespace detail

/// Geometry-derived constants of one pipe.
struct PipeHydraulics {
  double length = 0.0;     // m
  double diameter = 0.0;   // m
  double area = 0.0;       // pi d^2 / 4, m^2
  double resistance = 0.0; // k = l / (2 d g A^2), s^2/m^5
  double roughness = 0.0;  // m

  PipeHydraulics() = default;

  PipeHydraulics(double l, double d, double eps, const FluidProperties& fluid)
      : length(l),
        diameter(d),
        area(std::numbers::pi * d * d / 4.0),
        resistance(l / (2.0 * d * fluid.gravity * area * area)),
        roughness(eps) {
    if (!(l > 0.0) || !(d > 0.0)) throw NetworkError("pipe length and diameter must be positive");
  }

  PipeHydraulics(const Pipe& p, const FluidProperties& fluid)
      : PipeHydraulics(p.length, p.diameter, p.roughness.value_or(0.0), fluid) {}
};

/// Re = rho d |Q| / (A eta).
inline double reynolds(double flow, const PipeHydraulics& pipe, const FluidProperties& fluid) {
  return fluid.density * pipe.diameter * std::abs(flow) / (pipe.area * fluid.viscosity);
}

/// F_cw(lambda) = 1/sqrt(lambda) + 2/ln10 * ln(eps/(3.7 d) + 2.51/(Re sqrt(lambda))).
inline double colebrook_residual(double lambda, double re, double roughness, double diameter) {
  const double w = 1.0 / std::sqrt(lambda);
  return w + 2.0 / detail::kLn10 *
                 std::log(roughness / (detail::kCwRough * diameter) + detail::kCwSmooth * w / re);
}

/// Colebrook-White friction factor by fixed-point iteration on w = 1/sqrt(lambda).
/// The map is a contraction for turbulent Reynolds numbers; `start` is the
/// initial w.
inline double friction_factor_cw(double re, double roughness, double diameter, double start = 10.0) {
  if (!(re >= kTurbulentReynolds))
    throw RegimeError("Colebrook-White requires Re >= 4000, got Re = " + std::to_string(re));
  const double rough = std::abs(roughness) / (detail::kCwRough * diameter);
  const double c = 2.0 / detail::kLn10;
  double w = start;
  for (int it = 0; it < 100; ++it) {
    const double next = -c * std::log(rough + detail::kCwSmooth * w / re);
    if (!std::isfinite(next) || next <= 0.0)
      throw NumericError("Colebrook-White iteration left the admissible range");
    const double step = std::abs(next - w);
    w = next;
    if (step <= 1e-14 * std::max(1.0, w)) return 1.0 / (w * w);
  }
  throw NumericError("Colebrook-White iteration did not converge in 100 steps (Re = " +
                     std::to_string(re) + ")");
}

/// Darcy-Weisbach: dh = lambda k |Q| Q.
inline double headloss_dw(double flow, double lambda, double resistance) noexcept {
  return lambda * resistance * std::abs(flow) * flow;
}

/// ell = |eps|/(3.7 d) + 2.51 (eta A)/(rho d) sqrt(k/|dh|), the argument of the
/// logarithm in f_t.
inline double log_argument(double roughness, double headloss, const PipeHydraulics& pipe,
                           const FluidProperties& fluid) {
  if (headloss == 0.0) throw SingularityError("log argument undefined at zero head loss");
  const double viscous = fluid.viscosity * pipe.area / (fluid.density * pipe.diameter);
  return std::abs(roughness) / (detail::kCwRough * pipe.diameter) +
         detail::kCwSmooth * viscous * std::sqrt(pipe.resistance / std::abs(headloss));
}

/// Explicit turbulent flow for a given head loss,
///   f_t = -sign(dh) 2/ln10 sqrt(|dh|/k) ln(ell(|eps|, dh)),
/// with f_t(eps, 0) = 0. Odd in dh, even in eps.
inline double turbulent_flow(double roughness, double headloss, const PipeHydraulics& pipe,
                             const FluidProperties& fluid) {
  if (headloss == 0.0) return 0.0;
  const double ell = log_argument(roughness, headloss, pipe, fluid);
  return -detail::sign_of(headloss) * 2.0 / detail::kLn10 *
         std::sqrt(std::abs(headloss) / pipe.resistance) * std::log(ell);
}

/// d f_t / d eps. Carries the sign(eps) factor of the |eps| symmetrization
/// (taken as +1 at eps = 0), so it is the exact derivative for negative
/// roughness as well.
inline double d_flow_d_roughness(double roughness, double headloss, const PipeHydraulics& pipe,
                                 const FluidProperties& fluid) {
  const double ell = log_argument(roughness, headloss, pipe, fluid);
  const double eps_sign = roughness < 0.0 ? -1.0 : 1.0;
  return -eps_sign * 2.0 / detail::kLn10 * detail::sign_of(headloss) *
         std::sqrt(std::abs(headloss) / pipe.resistance) / (detail::kCwRough * pipe.diameter * ell);
}

/// d f_t / d dh (the derivative of sign(dh) is dropped). Even in dh.
inline double d_flow_d_headloss(double roughness, double headloss, const PipeHydraulics& pipe,
                                const FluidProperties& fluid) {
  const double ell = log_argument(roughness, headloss, pipe, fluid);
  const double abs_dh = std::abs(headloss);
  const double viscous = fluid.viscosity * pipe.area / (fluid.density * pipe.diameter);
  return -1.0 / detail::kLn10 *
         (std::sqrt(1.0 / (pipe.resistance * abs_dh)) * std::log(ell) -
          detail::kCwSmooth * viscous / (abs_dh * ell));
}

}  // namespace hydrocal
