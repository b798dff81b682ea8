#pragma once

#include "geoflow.hpp"
#include "geoflow/experiment/cache.hpp"
#include "geoflow/experiment/config.hpp"
#include "geoflow/experiment/runner.hpp"
#include "geoflow/experiment/table.hpp"
