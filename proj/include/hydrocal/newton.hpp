#pragma once

// Modified Newton-Raphson for over-determined systems f(x) = 0: the Newton
// direction uses the left pseudoinverse of the (column-scaled) Jacobian, and
// the step length is controlled by a merit-function backtracking line search
// with quadratic then cubic interpolation (Numerical Recipes, lnsrch).

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SVD>

#include "hydrocal/error.hpp"
#include "hydrocal/measurement.hpp"

namespace hydrocal {

enum class NormKind { l1, l2, linf };

inline const char* to_string(NormKind k) noexcept {
  switch (k) {
    case NormKind::l1: return "l1";
    case NormKind::l2: return "l2";
    case NormKind::linf: return "linf";
  }
  return "?";
}

inline double merit(const Vector& f, NormKind kind = NormKind::l1) {
  switch (kind) {
    case NormKind::l1: return f.lpNorm<1>();
    case NormKind::l2: return f.norm();
    case NormKind::linf: return f.size() == 0 ? 0.0 : f.lpNorm<Eigen::Infinity>();
  }
  return f.lpNorm<1>();
}

/// Directional derivative of the L1 merit along the Newton direction:
/// -sign(f)^T f.
inline double descent_rate(const Vector& f) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) s -= (f(i) > 0.0 ? 1.0 : (f(i) < 0.0 ? -1.0 : 0.0)) * f(i);
  return s;
}

inline constexpr double kMaxCondition = 1e12;

/// dx = -D (J D)^+ f, the least-squares minimiser of ||J dx + f||_2. `scaling`
/// holds the diagonal of D (empty means identity). Throws DegeneracyError when
/// cond(J D) exceeds `max_condition`, naming the variables that dominate the
/// weakest singular direction.
inline Vector newton_direction(const Matrix& jac, const Vector& f, const Vector& scaling = {},
                               std::span<const std::string> labels = {},
                               double max_condition = kMaxCondition) {
  if (jac.rows() != f.size())
    throw DimensionError("Jacobian has " + std::to_string(jac.rows()) + " rows, residual has " +
                         std::to_string(f.size()) + " entries");
  if (jac.rows() < jac.cols())
    throw DimensionError("Jacobian has fewer rows than columns");
  const Eigen::Index n = jac.cols();
  Vector d = scaling.size() == 0 ? Vector::Ones(n) : scaling;
  if (d.size() != n) throw DimensionError("scaling vector does not match Jacobian columns");
  if (n == 0) return Vector();

  const Matrix scaled = jac * d.asDiagonal();
  Eigen::JacobiSVD<Matrix> svd(scaled, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(n - 1);
  if (!(smin > 0.0) || !(smax / smin <= max_condition)) {
    const Vector weak = svd.matrixV().col(n - 1);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return std::abs(weak(a)) > std::abs(weak(b)); });
    std::ostringstream msg;
    msg << "Jacobian is rank deficient (condition " << (smin > 0.0 ? smax / smin : INFINITY)
        << "); weakest direction dominated by";
    for (std::size_t i = 0; i < std::min<std::size_t>(3, order.size()); ++i) {
      const Eigen::Index j = order[i];
      msg << ' ';
      if (static_cast<std::size_t>(j) < labels.size())
        msg << labels[static_cast<std::size_t>(j)];
      else
        msg << "x[" << j << ']';
      msg << " (" << weak(j) << ')';
    }
    throw DegeneracyError(msg.str());
  }
  const Vector y = svd.matrixV() * (sv.cwiseInverse().asDiagonal() * (svd.matrixU().transpose() * f));
  return -(d.asDiagonal() * y);
}

/// Minimiser of the quadratic through g(0) = v_prev, g'(0) = slope, g(1) = v_trial.
inline double quadratic_backtrack(double slope, double v_prev, double v_trial) {
  return -slope / (2.0 * (v_trial - v_prev - slope));
}

/// Minimiser of the cubic through g(0) = v_prev, g'(0) = slope and the two most
/// recent trials (mu1, v1), (mu2, v2); mu1 is the latest. Capped at 0.5 mu1.
inline double cubic_backtrack(double slope, double v_prev, double mu1, double v1, double mu2,
                              double v2) {
  const double rhs1 = v1 - v_prev - mu1 * slope;
  const double rhs2 = v2 - v_prev - mu2 * slope;
  const double a = (rhs1 / (mu1 * mu1) - rhs2 / (mu2 * mu2)) / (mu1 - mu2);
  const double b = (-mu2 * rhs1 / (mu1 * mu1) + mu1 * rhs2 / (mu2 * mu2)) / (mu1 - mu2);
  double mu;
  if (a == 0.0) {
    mu = -slope / (2.0 * b);
  } else {
    const double disc = b * b - 3.0 * a * slope;
    if (disc < 0.0)
      mu = 0.5 * mu1;
    else if (b <= 0.0)
      mu = (-b + std::sqrt(disc)) / (3.0 * a);
    else
      mu = -slope / (b + std::sqrt(disc));  // same root, no cancellation
  }
  if (!std::isfinite(mu)) mu = 0.5 * mu1;
  return std::min(mu, 0.5 * mu1);
}

struct NewtonOptions {
  double eps_f = 1e-7;  // merit change
  double eps_x = 5e-7;  // L2 length of the last step
  int max_iterations = 1000;
  NormKind norm = NormKind::l1;
};

/// f and J at one point.
struct Evaluation {
  Vector f;
  Matrix jacobian;
};

/// One trial of the step-length control.
struct LineSearchStep {
  int iteration = 0;      // Newton iteration the trial belongs to
  double mu = 1.0;        // trial step length
  double merit = 0.0;     // merit at the trial point
  double base_merit = 0.0;
  double slope = 0.0;     // s_k
  bool accepted = false;
  double next_mu = 1.0;   // step length chosen after this trial
  double quadratic_mu = 0.0;  // first-rejection quadratic value (0 if not applicable)
};

struct NewtonResult {
  Vector x;
  Vector f;
  double merit = 0.0;
  int iterations = 0;
  bool hit_iteration_cap = false;
  std::vector<LineSearchStep> steps;
};

/// Algorithm of the modified Newton-Raphson with step-length variation.
///
/// `fun(x)` returns an Evaluation, `project(x)` is applied to every new trial
/// point before it is evaluated (used to fold roughness onto |eps|), and
/// `scaling` is the diagonal column scaling for the direction computation.
/// Returns the last accepted base point x_{k-1} and its residual.
template <class Fun, class Project>
NewtonResult newton_solve(Fun&& fun, const Vector& x0, const NewtonOptions& opts,
                          const Vector& scaling, Project&& project,
                          std::span<const std::string> labels = {}) {
  if (!(opts.eps_f > 0.0) || !(opts.eps_x > 0.0) || opts.max_iterations <= 0)
    throw DomainError("Newton tolerances and iteration cap must be positive");

  auto checked_merit = [&](const Vector& f) {
    const double v = merit(f, opts.norm);
    if (!std::isfinite(v)) throw NumericError("merit function is not finite");
    return v;
  };

  Vector x_k = x0;
  Evaluation e_k = fun(x_k);
  double v_k = checked_merit(e_k.f);
  double v_prev = v_k;
  Vector x_prev = x_k;
  Vector f_prev = e_k.f;
  Vector dx = newton_direction(e_k.jacobian, e_k.f, scaling, labels);
  double mu = 1.0;
  double s_k = 0.0;
  int iter = 0;

  // Previous rejected trial, for the cubic model.
  double mu2 = 0.0, v2 = 0.0;

  NewtonResult out;
  while ((std::abs(v_k - v_prev) > opts.eps_f || (mu * dx).norm() > opts.eps_x) &&
         iter < opts.max_iterations) {
    if (mu == 1.0) {
      dx = newton_direction(e_k.jacobian, e_k.f, scaling, labels);
      s_k = opts.norm == NormKind::l1 ? descent_rate(e_k.f) : -merit(e_k.f, opts.norm);
      v_k = checked_merit(e_k.f);
      f_prev = e_k.f;
      x_prev = x_k;
      v_prev = v_k;
      ++iter;
    }
    x_k = x_prev + mu * dx;
    project(x_k);
    e_k = fun(x_k);
    v_k = checked_merit(e_k.f);
    const double mu_old = mu;

    LineSearchStep step;
    step.iteration = iter;
    step.mu = mu_old;
    step.merit = v_k;
    step.base_merit = v_prev;
    step.slope = s_k;
    if (v_k > v_prev + 1e-4 * mu * s_k) {
      if (mu == 1.0) {
        mu = quadratic_backtrack(s_k, v_prev, v_k);
        step.quadratic_mu = mu;
      } else {
        mu = cubic_backtrack(s_k, v_prev, mu_old, v_k, mu2, v2);
      }
      mu = std::clamp(mu, 0.1 * mu_old, 0.5 * mu_old);
      mu2 = mu_old;
      v2 = v_k;
    } else {
      step.accepted = true;
      mu = 1.0;
    }
    step.next_mu = mu;
    out.steps.push_back(step);
  }

  out.hit_iteration_cap = iter >= opts.max_iterations;
  out.iterations = iter;
  out.x = std::move(x_prev);
  out.f = std::move(f_prev);
  out.merit = v_prev;
  return out;
}

/// Overload without projection.
template <class Fun>
NewtonResult newton_solve(Fun&& fun, const Vector& x0, const NewtonOptions& opts,
                          const Vector& scaling = {}) {
  return newton_solve(std::forward<Fun>(fun), x0, opts, scaling, [](Vector&) {});
}

}  // namespace hydrocal
