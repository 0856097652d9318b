#pragma once

// Roughness identification from pressure measurements.
//
// Unknowns are the pipe roughnesses and, per measurement set, the pressure
// heads at the unmeasured nodes:
//   x = [eps; h_N(1); ...; h_N(n_m)].
// For set i the head losses follow from the energy balance
//   dh(i) = C_s h_s(i) - A^T C_h^T y(i) - A^T Cbar_h^T h_N(i) - A^T z,
// pipe flows from the explicit turbulent law Q = f_t(eps, dh), and the
// residual stacks the nodal mass balances A Q(i) - q(i) over all sets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>

#include "hydrocal/error.hpp"
#include "hydrocal/friction.hpp"
#include "hydrocal/measurement.hpp"
#include "hydrocal/network.hpp"
#include "hydrocal/newton.hpp"
#include "hydrocal/rng.hpp"
#include "hydrocal/steady_state.hpp"
#include "hydrocal/topology.hpp"

namespace hydrocal {

/// Head losses smaller than this are treated as zero flow during iteration.
inline constexpr double kHeadLossFloor = 1e-9;  // m

/// Roughness range considered physical, as a fraction of the diameter.
inline constexpr double kMaxRelativeRoughness = 0.05;

/// Positions of the unknowns inside the decision vector.
struct DecisionLayout {
  std::size_t n_pipes = 0;
  std::size_t n_unmeasured = 0;
  std::size_t n_sets = 0;

  std::size_t size() const noexcept { return n_pipes + n_sets * n_unmeasured; }
  std::size_t head_offset(std::size_t set) const noexcept { return n_pipes + set * n_unmeasured; }

  auto roughness(const Vector& x) const { return x.head(static_cast<Eigen::Index>(n_pipes)); }
  auto heads(const Vector& x, std::size_t set) const {
    return x.segment(static_cast<Eigen::Index>(head_offset(set)),
                     static_cast<Eigen::Index>(n_unmeasured));
  }
};

/// Immutable description of one calibration problem.
class CalibrationProblem {
 public:
  CalibrationProblem(Network net, SensorConfig sensors, std::vector<MeasurementSet> sets)
      : net_(std::move(net)), sensors_(std::move(sensors)), sets_(std::move(sets)) {
    topo_ = build_topology(net_);
    const auto nj = static_cast<Eigen::Index>(net_.n_inner());
    const auto ns = static_cast<Eigen::Index>(net_.n_sources());
    const auto np = static_cast<Eigen::Index>(sensors_.n_measured());
    if (sets_.empty()) throw DimensionError("at least one measurement set is required");
    for (std::size_t i = 0; i < sets_.size(); ++i) {
      const MeasurementSet& m = sets_[i];
      if (m.demands.size() != nj || m.source_heads.size() != ns || m.sensed_heads.size() != np)
        throw DimensionError("measurement set " + std::to_string(i + 1) +
                             " does not match the network / sensor layout");
    }
    layout_ = {net_.n_pipes(), sensors_.n_unmeasured(), sets_.size()};

    incidence_ = topo_.incidence.cast<double>();
    const Matrix at = incidence_.transpose();
    unmeasured_map_ = at * sensors_.complement().cast<double>().transpose();
    const auto z_std = net_.elevations();
    elevation_ = Eigen::Map<const Vector>(z_std.data(), nj);
    const Matrix measured_map = at * sensors_.selector().cast<double>().transpose();
    for (const MeasurementSet& m : sets_)
      fixed_losses_.push_back(topo_.source_incidence.cast<double>() * m.source_heads -
                              measured_map * m.sensed_heads - at * elevation_);
    for (const Pipe& p : net_.pipes()) pipes_.emplace_back(p, net_.fluid());

    for (std::size_t p = 0; p < net_.n_pipes(); ++p) labels_.push_back("eps:" + net_.pipe(p).id);
    for (std::size_t i = 0; i < sets_.size(); ++i)
      for (std::size_t u : sensors_.unmeasured())
        labels_.push_back("h:" + net_.inner_node(u).id + ":" + std::to_string(i + 1));
  }

  const Network& network() const noexcept { return net_; }
  const SensorConfig& sensors() const noexcept { return sensors_; }
  const std::vector<MeasurementSet>& sets() const noexcept { return sets_; }
  const TopologyMatrices& topology() const noexcept { return topo_; }
  const DecisionLayout& layout() const noexcept { return layout_; }
  const std::vector<PipeHydraulics>& pipes() const noexcept { return pipes_; }
  const Matrix& incidence() const noexcept { return incidence_; }
  /// A^T Cbar_h^T: head-loss sensitivity (with a minus sign) to h_N.
  const Matrix& unmeasured_map() const noexcept { return unmeasured_map_; }
  const Vector& elevation() const noexcept { return elevation_; }
  /// Head-loss part that does not depend on x, per set.
  const Vector& fixed_losses(std::size_t set) const { return fixed_losses_.at(set); }
  /// Coordinate names "eps:<pipe>" and "h:<node>:<set>" (sets 1-based).
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::size_t n_equations() const noexcept { return sets_.size() * net_.n_inner(); }

  void check(const Vector& x) const {
    if (static_cast<std::size_t>(x.size()) != layout_.size())
      throw DimensionError("decision vector has " + std::to_string(x.size()) + " entries, expected " +
                           std::to_string(layout_.size()));
  }

  /// Index of a coordinate given its label.
  std::size_t coordinate(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    if (it == labels_.end()) throw DimensionError("unknown coordinate '" + label + "'");
    return static_cast<std::size_t>(it - labels_.begin());
  }

 private:
  Network net_;
  SensorConfig sensors_;
  std::vector<MeasurementSet> sets_;
  TopologyMatrices topo_;
  DecisionLayout layout_;
  Matrix incidence_;
  Matrix unmeasured_map_;
  Vector elevation_;
  std::vector<Vector> fixed_losses_;
  std::vector<PipeHydraulics> pipes_;
  std::vector<std::string> labels_;
};

/// Head losses of set `set` implied by x.
inline Vector head_losses(const CalibrationProblem& pb, const Vector& x, std::size_t set) {
  pb.check(x);
  return pb.fixed_losses(set) - pb.unmeasured_map() * pb.layout().heads(x, set);
}

/// How evaluations treat a (near-)zero head loss.
enum class ZeroLossPolicy {
  strict,   // SingularityError naming pipe and set
  lenient,  // flow and derivatives set to zero, warning recorded
};

struct EvaluationNotes {
  std::size_t zero_loss_pipes = 0;   // (set, pipe) pairs with |dh| < floor
  std::size_t non_turbulent = 0;     // (set, pipe) pairs with Re < 4000
  std::vector<std::string> warnings;
};

namespace detail {

inline void note_zero_loss(const CalibrationProblem& pb, std::size_t set, std::size_t pipe,
                           double dh, ZeroLossPolicy policy, EvaluationNotes* notes) {
  const std::string what = "pipe '" + pb.network().pipe(pipe).id + "' in set " +
                           std::to_string(set + 1) + " has head loss " + std::to_string(dh) + " m";
  if (policy == ZeroLossPolicy::strict) throw SingularityError(what);
  if (notes) {
    ++notes->zero_loss_pipes;
    notes->warnings.push_back(what + "; flow taken as zero");
  }
}

/// Flows of one set; also fills the per-pipe partials when requested.
inline Vector set_flows(const CalibrationProblem& pb, const Vector& x, std::size_t set,
                        ZeroLossPolicy policy, EvaluationNotes* notes, Vector* p_eps = nullptr,
                        Vector* p_dh = nullptr) {
  const Vector dh = head_losses(pb, x, set);
  const auto eps = pb.layout().roughness(x);
  const FluidProperties& fluid = pb.network().fluid();
  const auto nl = dh.size();
  Vector q(nl);
  if (p_eps) p_eps->resize(nl);
  if (p_dh) p_dh->resize(nl);
  for (Eigen::Index p = 0; p < nl; ++p) {
    const PipeHydraulics& pipe = pb.pipes()[static_cast<std::size_t>(p)];
    if (std::abs(dh(p)) < kHeadLossFloor) {
      note_zero_loss(pb, set, static_cast<std::size_t>(p), dh(p), policy, notes);
      q(p) = 0.0;
      if (p_eps) (*p_eps)(p) = 0.0;
      if (p_dh) (*p_dh)(p) = 0.0;
      continue;
    }
    q(p) = turbulent_flow(eps(p), dh(p), pipe, fluid);
    if (notes && reynolds(q(p), pipe, fluid) < kTurbulentReynolds) ++notes->non_turbulent;
    if (p_eps) (*p_eps)(p) = d_flow_d_roughness(eps(p), dh(p), pipe, fluid);
    if (p_dh) (*p_dh)(p) = d_flow_d_headloss(eps(p), dh(p), pipe, fluid);
  }
  return q;
}

}  // namespace detail

/// Pipe flows of set `set` implied by x.
inline Vector calibration_flows(const CalibrationProblem& pb, const Vector& x, std::size_t set,
                                ZeroLossPolicy policy = ZeroLossPolicy::lenient) {
  return detail::set_flows(pb, x, set, policy, nullptr);
}

/// Stacked nodal mass-balance residual, n_m * n_j entries in m^3/s.
inline Vector residual(const CalibrationProblem& pb, const Vector& x,
                       ZeroLossPolicy policy = ZeroLossPolicy::lenient,
                       EvaluationNotes* notes = nullptr) {
  pb.check(x);
  const auto nj = static_cast<Eigen::Index>(pb.network().n_inner());
  Vector f(static_cast<Eigen::Index>(pb.n_equations()));
  for (std::size_t i = 0; i < pb.sets().size(); ++i) {
    const Vector q = detail::set_flows(pb, x, i, policy, notes);
    f.segment(static_cast<Eigen::Index>(i) * nj, nj) = pb.incidence() * q - pb.sets()[i].demands;
  }
  return f;
}

/// Residual and its block-structured Jacobian in one pass. Row block i is
///   [A diag(p_eps(i)) | 0 ... | -A diag(p_dh(i)) A^T Cbar_h^T | ... 0].
inline Evaluation evaluate(const CalibrationProblem& pb, const Vector& x,
                           ZeroLossPolicy policy = ZeroLossPolicy::lenient,
                           EvaluationNotes* notes = nullptr) {
  pb.check(x);
  const DecisionLayout& lay = pb.layout();
  const auto nj = static_cast<Eigen::Index>(pb.network().n_inner());
  const auto nl = static_cast<Eigen::Index>(lay.n_pipes);
  const auto nu = static_cast<Eigen::Index>(lay.n_unmeasured);
  Evaluation e;
  e.f.resize(static_cast<Eigen::Index>(pb.n_equations()));
  e.jacobian = Matrix::Zero(e.f.size(), static_cast<Eigen::Index>(lay.size()));
  Vector p_eps, p_dh;
  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    const auto row = static_cast<Eigen::Index>(i) * nj;
    const Vector q = detail::set_flows(pb, x, i, policy, notes, &p_eps, &p_dh);
    e.f.segment(row, nj) = pb.incidence() * q - pb.sets()[i].demands;
    e.jacobian.block(row, 0, nj, nl) = pb.incidence() * p_eps.asDiagonal();
    e.jacobian.block(row, static_cast<Eigen::Index>(lay.head_offset(i)), nj, nu) =
        -(pb.incidence() * p_dh.asDiagonal() * pb.unmeasured_map());
  }
  return e;
}

/// Jacobian of the residual. Strict by default: any |dh| below the floor is an error.
inline Matrix jacobian(const CalibrationProblem& pb, const Vector& x,
                       ZeroLossPolicy policy = ZeroLossPolicy::strict) {
  return evaluate(pb, x, policy).jacobian;
}

/// Box of physically sensible values for x.
struct PhysicalBounds {
  Vector lower;
  Vector upper;

  bool heads_within(const DecisionLayout& lay, const Vector& x) const {
    const auto off = static_cast<Eigen::Index>(lay.n_pipes);
    const auto n = static_cast<Eigen::Index>(lay.size()) - off;
    return ((x.segment(off, n).array() >= lower.segment(off, n).array()) &&
            (x.segment(off, n).array() <= upper.segment(off, n).array()))
        .all();
  }
};

namespace detail {

/// Known piezometric heads adjacent to inner node k in set i: sensed
/// neighbours (pressure head + elevation) and sources.
inline std::vector<double> known_neighbour_heads(const CalibrationProblem& pb, std::size_t set,
                                                 std::size_t k) {
  const Network& net = pb.network();
  const MeasurementSet& m = pb.sets()[set];
  std::vector<double> sensed_at(net.n_inner(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0; r < pb.sensors().n_measured(); ++r) {
    const std::size_t node = pb.sensors().measured()[r];
    sensed_at[node] = m.sensed_heads(static_cast<Eigen::Index>(r)) + net.inner_node(node).elevation;
  }
  std::vector<double> heads;
  const std::string& id = net.inner_node(k).id;
  for (const Pipe& p : net.pipes()) {
    const std::string* other = nullptr;
    if (p.from == id) other = &p.to;
    else if (p.to == id) other = &p.from;
    if (!other) continue;
    const Endpoint ep = net.endpoint(*other);
    if (ep.kind == NodeKind::source)
      heads.push_back(m.source_heads(static_cast<Eigen::Index>(ep.index)));
    else if (!std::isnan(sensed_at[ep.index]))
      heads.push_back(sensed_at[ep.index]);
  }
  return heads;
}

inline std::vector<double> all_known_heads(const CalibrationProblem& pb, std::size_t set) {
  const MeasurementSet& m = pb.sets()[set];
  std::vector<double> heads(m.source_heads.begin(), m.source_heads.end());
  for (std::size_t r = 0; r < pb.sensors().n_measured(); ++r)
    heads.push_back(m.sensed_heads(static_cast<Eigen::Index>(r)) +
                    pb.network().inner_node(pb.sensors().measured()[r]).elevation);
  return heads;
}

}  // namespace detail

struct InitialGuess {
  Vector x;
  std::vector<std::string> warnings;
};

/// Starting point: each unmeasured head is the mean known piezometric head of
/// its graph neighbours (converted back to pressure head), roughness is 1% of
/// the diameter.
inline InitialGuess initial_guess(const CalibrationProblem& pb) {
  const DecisionLayout& lay = pb.layout();
  InitialGuess g;
  g.x.resize(static_cast<Eigen::Index>(lay.size()));
  for (std::size_t p = 0; p < lay.n_pipes; ++p)
    g.x(static_cast<Eigen::Index>(p)) = 0.01 * pb.pipes()[p].diameter;
  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    for (std::size_t u = 0; u < lay.n_unmeasured; ++u) {
      const std::size_t k = pb.sensors().unmeasured()[u];
      auto heads = detail::known_neighbour_heads(pb, i, k);
      if (heads.empty()) {
        g.warnings.push_back("node '" + pb.network().inner_node(k).id + "' in set " +
                             std::to_string(i + 1) +
                             " has no neighbour with known head; using the mean of all known heads");
        heads = detail::all_known_heads(pb, i);
      }
      double sum = 0.0;
      for (double h : heads) sum += h;
      g.x(static_cast<Eigen::Index>(lay.head_offset(i) + u)) =
          sum / static_cast<double>(heads.size()) - pb.network().inner_node(k).elevation;
    }
  }
  return g;
}

/// Roughness in [0, 5% of d]; each unmeasured head between the smallest and
/// largest known piezometric head among its neighbours (sources included).
inline PhysicalBounds default_bounds(const CalibrationProblem& pb) {
  const DecisionLayout& lay = pb.layout();
  PhysicalBounds b;
  b.lower.resize(static_cast<Eigen::Index>(lay.size()));
  b.upper.resize(static_cast<Eigen::Index>(lay.size()));
  for (std::size_t p = 0; p < lay.n_pipes; ++p) {
    b.lower(static_cast<Eigen::Index>(p)) = 0.0;
    b.upper(static_cast<Eigen::Index>(p)) = kMaxRelativeRoughness * pb.pipes()[p].diameter;
  }
  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    for (std::size_t u = 0; u < lay.n_unmeasured; ++u) {
      const std::size_t k = pb.sensors().unmeasured()[u];
      auto heads = detail::known_neighbour_heads(pb, i, k);
      if (heads.empty()) heads = detail::all_known_heads(pb, i);
      const auto [lo, hi] = std::minmax_element(heads.begin(), heads.end());
      const double z = pb.network().inner_node(k).elevation;
      const auto j = static_cast<Eigen::Index>(lay.head_offset(i) + u);
      b.lower(j) = *lo - z;
      b.upper(j) = *hi - z;
    }
  }
  return b;
}

/// Diagonal column scaling: 5% of d for roughness, bound width (at least 1 m)
/// for heads.
inline Vector column_scaling(const CalibrationProblem& pb, const PhysicalBounds& bounds) {
  const DecisionLayout& lay = pb.layout();
  Vector d(static_cast<Eigen::Index>(lay.size()));
  for (std::size_t p = 0; p < lay.n_pipes; ++p)
    d(static_cast<Eigen::Index>(p)) = kMaxRelativeRoughness * pb.pipes()[p].diameter;
  for (auto j = static_cast<Eigen::Index>(lay.n_pipes); j < d.size(); ++j)
    d(j) = std::max(bounds.upper(j) - bounds.lower(j), 1.0);
  return d;
}

/// Newton solve of the calibration problem from x0. Roughness components are
/// folded onto |eps| after every step.
inline NewtonResult calibrate_from(const CalibrationProblem& pb, const Vector& x0,
                                   const NewtonOptions& opts, const Vector& scaling,
                                   EvaluationNotes* notes = nullptr) {
  pb.check(x0);
  const auto nl = static_cast<Eigen::Index>(pb.layout().n_pipes);
  return newton_solve([&](const Vector& x) { return evaluate(pb, x, ZeroLossPolicy::lenient, notes); },
                      x0, opts, scaling,
                      [nl](Vector& x) { x.head(nl) = x.head(nl).cwiseAbs(); }, pb.labels());
}

/// Unmeasured heads that best explain the data for a fixed roughness vector
/// (Newton restricted to the head columns). Returns the full decision vector.
inline Vector fit_unmeasured_heads(const CalibrationProblem& pb, const Vector& roughness,
                                   const NewtonOptions& opts = {}) {
  const DecisionLayout& lay = pb.layout();
  if (static_cast<std::size_t>(roughness.size()) != lay.n_pipes)
    throw DimensionError("roughness vector does not match the pipe count");
  const auto nl = static_cast<Eigen::Index>(lay.n_pipes);
  const auto nh = static_cast<Eigen::Index>(lay.size()) - nl;
  Vector x = initial_guess(pb).x;
  x.head(nl) = roughness;
  const PhysicalBounds b = default_bounds(pb);
  const Vector scaling = column_scaling(pb, b).tail(nh);
  auto fun = [&](const Vector& heads) {
    Vector full = x;
    full.tail(nh) = heads;
    Evaluation e = evaluate(pb, full, ZeroLossPolicy::lenient);
    e.jacobian = e.jacobian.rightCols(nh).eval();
    return e;
  };
  const NewtonResult r = newton_solve(fun, Vector(x.tail(nh)), opts, scaling);
  x.tail(nh) = r.x;
  return x;
}

struct CalibrationOptions {
  std::uint64_t seed = 1;
  int max_outer = 7;        // total Newton launches, the first one included
  double eps_f = 1e-8;      // outer: accept when best merit drops below this
  double eps_x = 5e-7;      // outer: ... and the last candidate is the buffered one
  NewtonOptions newton{};
  std::optional<Vector> x0;               // default: initial_guess()
  std::optional<PhysicalBounds> bounds;   // default: default_bounds()
};

/// One launch of the inner Newton solver.
struct OuterRecord {
  int outer_iteration = 0;  // 1-based
  Vector x0;
  Vector x;
  double merit = std::numeric_limits<double>::infinity();
  bool within_bounds = false;
  bool buffered = false;
  int newton_iterations = 0;
  std::size_t non_turbulent = 0;  // (set, pipe) pairs below Re = 4000 at x
  std::vector<std::size_t> redrawn;  // roughness indices re-seeded for this launch
  std::string failure;               // non-empty when the Newton solve threw
  std::vector<LineSearchStep> steps;
};

struct CalibrationResult {
  Vector x;        // best candidate x+
  Vector f;        // residual at x+
  double merit = std::numeric_limits<double>::infinity();
  bool feasible = false;   // x+ satisfies the head bounds
  bool converged = false;  // merit reached the outer tolerance
  std::uint64_t seed = 0;
  NormKind norm = NormKind::l1;
  std::vector<OuterRecord> trace;
  std::vector<RegimeFlag> non_turbulent;  // at x+, across all sets
  std::vector<std::string> warnings;
};

/// Multistart around the Newton solver: the best in-bounds candidate is
/// buffered; each restart inherits its heads and re-draws, uniformly in
/// [0, 5% d], exactly the roughness components of x+ that exceed 5% of d.
/// Deterministic for a fixed seed.
inline CalibrationResult multistart_calibrate(const CalibrationProblem& pb,
                                              const CalibrationOptions& opts = {}) {
  const DecisionLayout& lay = pb.layout();
  const std::size_t needed = min_measurement_sets(lay.n_pipes, pb.sensors().n_measured());
  if (lay.n_sets < needed)
    throw DimensionError("calibration needs at least " + std::to_string(needed) +
                         " measurement sets (ceil(n_pipes / n_sensors)), got " +
                         std::to_string(lay.n_sets));
  if (opts.max_outer < 1) throw DomainError("max_outer must be at least 1");

  CalibrationResult res;
  res.seed = opts.seed;
  res.norm = opts.newton.norm;
  InitialGuess guess = initial_guess(pb);
  res.warnings = guess.warnings;
  const Vector start = opts.x0 ? *opts.x0 : guess.x;
  pb.check(start);
  const PhysicalBounds bounds = opts.bounds ? *opts.bounds : default_bounds(pb);
  const Vector scaling = column_scaling(pb, bounds);
  SplitMix64 rng(opts.seed);

  std::optional<std::size_t> best;            // index into trace of x+
  std::optional<std::size_t> best_infeasible;
  std::set<std::string> seen_warnings;

  auto launch = [&](int outer, Vector x0, std::vector<std::size_t> redrawn) {
    OuterRecord rec;
    rec.outer_iteration = outer;
    rec.x0 = x0;
    rec.redrawn = std::move(redrawn);
    EvaluationNotes notes;
    try {
      NewtonResult nr = calibrate_from(pb, x0, opts.newton, scaling, &notes);
      rec.x = std::move(nr.x);
      rec.merit = nr.merit;
      rec.newton_iterations = nr.iterations;
      rec.steps = std::move(nr.steps);
      rec.within_bounds = bounds.heads_within(lay, rec.x);
      EvaluationNotes final_notes;
      (void)residual(pb, rec.x, ZeroLossPolicy::lenient, &final_notes);
      rec.non_turbulent = final_notes.non_turbulent;
    } catch (const NumericError& e) {
      rec.x = x0;
      rec.failure = e.what();
    }
    for (auto& w : notes.warnings)
      if (seen_warnings.insert(w).second && seen_warnings.size() <= 50) res.warnings.push_back(w);
    return rec;
  };

  auto consider = [&](OuterRecord& rec) {
    const std::size_t idx = res.trace.size();
    if (rec.failure.empty()) {
      if (rec.within_bounds && (!best || rec.merit <= res.trace[*best].merit)) {
        rec.buffered = true;
        best = idx;
      } else if (!rec.within_bounds &&
                 (!best_infeasible || rec.merit < res.trace[*best_infeasible].merit)) {
        best_infeasible = idx;
      }
    }
    res.trace.push_back(std::move(rec));
  };

  {
    OuterRecord first = launch(1, start, {});
    consider(first);
  }

  auto best_merit = [&] {
    return best ? res.trace[*best].merit : std::numeric_limits<double>::infinity();
  };
  auto last_gap = [&] {
    if (!best) return std::numeric_limits<double>::infinity();
    return (res.trace.back().x - res.trace[*best].x).norm();
  };

  int outer = 1;
  while ((best_merit() > opts.eps_f || last_gap() > opts.eps_x) && outer < opts.max_outer) {
    ++outer;
    Vector x0 = best ? res.trace[*best].x : start;
    std::vector<std::size_t> redrawn;
    for (std::size_t p = 0; p < lay.n_pipes; ++p) {
      const double cap = kMaxRelativeRoughness * pb.pipes()[p].diameter;
      // Without a buffered candidate every roughness is re-drawn.
      if (!best || x0(static_cast<Eigen::Index>(p)) > cap) {
        x0(static_cast<Eigen::Index>(p)) = rng.uniform(0.0, cap);
        redrawn.push_back(p);
      }
    }
    OuterRecord rec = launch(outer, std::move(x0), std::move(redrawn));
    consider(rec);
  }

  const std::optional<std::size_t> pick = best ? best : best_infeasible;
  if (pick) {
    const OuterRecord& r = res.trace[*pick];
    res.x = r.x;
    res.merit = r.merit;
    res.feasible = best.has_value();
  } else {
    res.x = start;
    res.feasible = false;
    res.warnings.push_back("every Newton launch failed");
  }
  res.f = residual(pb, res.x, ZeroLossPolicy::lenient);
  if (!pick) res.merit = merit(res.f, opts.newton.norm);
  res.converged = res.feasible && res.merit <= opts.eps_f;

  for (std::size_t i = 0; i < lay.n_sets; ++i) {
    const Vector q = calibration_flows(pb, res.x, i);
    for (std::size_t p = 0; p < lay.n_pipes; ++p) {
      const double re = reynolds(q(static_cast<Eigen::Index>(p)), pb.pipes()[p], pb.network().fluid());
      if (re < kTurbulentReynolds)
        res.non_turbulent.push_back({p, pb.network().pipe(p).id + " (set " + std::to_string(i + 1) + ")", re});
    }
  }
  return res;
}

/// One axis of a merit scan: coordinate index and an inclusive range.
struct ScanAxis {
  std::size_t coordinate = 0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t steps = 1;  // grid points; 1 means just `lo`

  double at(std::size_t k) const {
    return steps <= 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(steps - 1);
  }
};

struct ScanPoint {
  double a = 0.0;
  double b = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

struct ScanResult {
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::vector<ScanPoint> points;  // row-major: a outer, b inner
  std::vector<std::string> warnings;

  const ScanPoint& at(std::size_t ia, std::size_t ib) const { return points.at(ia * n_b + ib); }
};

/// Merit values over a 2-D grid in the coordinates (axis_a, axis_b); all other
/// coordinates stay at x_base. Without axis_b the grid is one-dimensional.
inline ScanResult scan_merit(const CalibrationProblem& pb, const Vector& x_base, const ScanAxis& axis_a,
                             const std::optional<ScanAxis>& axis_b = std::nullopt) {
  pb.check(x_base);
  const PhysicalBounds bounds = default_bounds(pb);
  ScanResult out;
  auto check_axis = [&](const ScanAxis& ax) {
    if (ax.coordinate >= pb.layout().size())
      throw DimensionError("scan axis coordinate out of range");
    if (ax.steps == 0) throw DimensionError("scan axis needs at least one grid point");
    const auto j = static_cast<Eigen::Index>(ax.coordinate);
    if (std::min(ax.lo, ax.hi) < bounds.lower(j) || std::max(ax.lo, ax.hi) > bounds.upper(j))
      out.warnings.push_back("axis " + pb.labels()[ax.coordinate] + " leaves the physical range [" +
                             std::to_string(bounds.lower(j)) + ", " + std::to_string(bounds.upper(j)) + "]");
  };
  check_axis(axis_a);
  if (axis_b) {
    check_axis(*axis_b);
    if (axis_b->coordinate == axis_a.coordinate) throw DimensionError("scan axes must differ");
  }
  out.n_a = axis_a.steps;
  out.n_b = axis_b ? axis_b->steps : 1;
  out.points.reserve(out.n_a * out.n_b);
  Vector x = x_base;
  for (std::size_t ia = 0; ia < out.n_a; ++ia) {
    for (std::size_t ib = 0; ib < out.n_b; ++ib) {
      ScanPoint pt;
      pt.a = axis_a.at(ia);
      x(static_cast<Eigen::Index>(axis_a.coordinate)) = pt.a;
      if (axis_b) {
        pt.b = axis_b->at(ib);
        x(static_cast<Eigen::Index>(axis_b->coordinate)) = pt.b;
      }
      const Vector f = residual(pb, x, ZeroLossPolicy::lenient);
      pt.l1 = merit(f, NormKind::l1);
      pt.l2 = merit(f, NormKind::l2);
      pt.linf = merit(f, NormKind::linf);
      out.points.push_back(pt);
    }
  }
  return out;
}

}  // namespace hydrocal
