#pragma once

#include <Eigen/Core>

namespace hydrocal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One steady-state loading condition as seen by the sensors.
struct MeasurementSet {
  Vector demands;       // per inner node, m^3/s
  Vector source_heads;  // per source, m (elevation included)
  Vector sensed_heads;  // per sensor, pressure head in m
};

}  // namespace hydrocal
