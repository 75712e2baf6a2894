#pragma once

// Umbrella header. cli.hpp is left out: it pulls in CLI11 and is only needed by the tool.

#include "attributes.hpp"
#include "config.hpp"
#include "core_model.hpp"
#include "effects.hpp"
#include "errors.hpp"
#include "estimator.hpp"
#include "io.hpp"
#include "montecarlo.hpp"
#include "report.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "variance.hpp"
