#pragma once

// Reference networks shared by the test suites.

#include <string>
#include <vector>

#include "hydrocal/network.hpp"
#include "hydrocal/steady_state.hpp"

namespace hydrocal::fixtures {

/// Three-cycle network: five inner nodes, one reservoir "R", eight pipes,
/// sensors at nodes 2, 3, 4.
inline Network three_cycle_network(bool with_roughness = true) {
  std::vector<Node> nodes = {{"1", NodeKind::inner, 0.0},  {"2", NodeKind::inner, 10.0},
                             {"3", NodeKind::inner, 5.0},  {"4", NodeKind::inner, 0.0},
                             {"5", NodeKind::inner, 0.0},  {"R", NodeKind::source, 0.0}};
  const std::vector<std::pair<std::string, std::string>> ends = {
      {"R", "1"}, {"1", "2"}, {"1", "3"}, {"2", "4"}, {"2", "5"}, {"5", "4"}, {"4", "3"}, {"5", "3"}};
  const double length[] = {10, 10, 20, 15, 5, 10, 15, 5};
  const double eps_mm[] = {2, 1.75, 1.5, 1.25, 1, 0.75, 0.5, 0.25};
  std::vector<Pipe> pipes;
  for (std::size_t p = 0; p < ends.size(); ++p) {
    Pipe pipe{"P" + std::to_string(p + 1), ends[p].first, ends[p].second, length[p], 0.04, {}, 0.0};
    if (with_roughness) pipe.roughness = eps_mm[p] * 1e-3;
    pipes.push_back(pipe);
  }
  return Network(FluidProperties{}, nodes, pipes);
}

inline std::vector<std::string> three_cycle_sensors() { return {"2", "3", "4"}; }

inline const std::vector<double>& three_cycle_roughness() {
  static const std::vector<double> eps = {2e-3, 1.75e-3, 1.5e-3, 1.25e-3,
                                          1e-3, 0.75e-3, 0.5e-3, 0.25e-3};
  return eps;
}

/// Demand columns of the three measurement sets, l/s at nodes 2, 3, 4.
inline std::vector<LoadingCondition> three_cycle_loads() {
  const double q[3][3] = {{0.9002, 1.5002, 1.0502}, {1.1001, 2.0001, 1.3501}, {1.3000, 2.5000, 1.6500}};
  std::vector<LoadingCondition> loads;
  for (const auto& row : q) {
    LoadingCondition l;
    l.demands = Vector::Zero(5);
    l.demands(1) = row[0] * 1e-3;
    l.demands(2) = row[1] * 1e-3;
    l.demands(3) = row[2] * 1e-3;
    l.source_heads = Vector::Constant(1, 100.0);
    loads.push_back(l);
  }
  return loads;
}

/// Published piezometric heads at nodes 2, 3, 4 for the three sets.
inline const double (&three_cycle_piezometric())[3][3] {
  static const double y[3][3] = {
      {90.9743, 90.8720, 90.8339}, {85.0087, 84.8200, 84.7638}, {77.5380, 77.2370, 77.1594}};
  return y;
}

/// Two-loop example network: inner nodes 1..3, reservoir R feeding node 1.
inline Network two_loop_network() {
  std::vector<Node> nodes = {{"1", NodeKind::inner, 0.0}, {"2", NodeKind::inner, 0.0},
                             {"3", NodeKind::inner, 0.0}, {"R", NodeKind::source, 0.0}};
  std::vector<Pipe> pipes = {{"Q1", "1", "2", 100, 0.1, 1e-4, 0.0}, {"Q2", "1", "3", 100, 0.1, 1e-4, 0.0},
                             {"Q3", "2", "3", 100, 0.1, 1e-4, 0.0}, {"Q4", "3", "2", 100, 0.1, 1e-4, 0.0},
                             {"Q5", "R", "1", 100, 0.1, 1e-4, 0.0}};
  return Network(FluidProperties{}, nodes, pipes);
}

}  // namespace hydrocal::fixtures
