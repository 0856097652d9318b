#pragma once

#include "hydrocal/error.hpp"
#include "hydrocal/rng.hpp"
#include "hydrocal/network.hpp"
#include "hydrocal/topology.hpp"
#include "hydrocal/friction.hpp"
#include "hydrocal/measurement.hpp"
#include "hydrocal/steady_state.hpp"
#include "hydrocal/newton.hpp"
#include "hydrocal/calibration.hpp"
#include "hydrocal/io.hpp"
