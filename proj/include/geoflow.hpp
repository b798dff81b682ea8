#pragma once

// Core numerical library. The experiment layer (YAML configs, tables,
// trajectory cache) lives in geoflow/experiment.hpp.

#include "geoflow/entropy.hpp"
#include "geoflow/errors.hpp"
#include "geoflow/fit.hpp"
#include "geoflow/geodesic.hpp"
#include "geoflow/green.hpp"
#include "geoflow/horospheres.hpp"
#include "geoflow/jacobi_riccati.hpp"
#include "geoflow/metric.hpp"
#include "geoflow/ode.hpp"
