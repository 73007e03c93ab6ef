#pragma once

// Umbrella header: branch model, safety zones, constrained planner,
// simulator, force-aware executor, and experiment plumbing.

#include "bramble/core.hpp"
#include "bramble/csv.hpp"
#include "bramble/dlo_model.hpp"
#include "bramble/executor.hpp"
#include "bramble/planner.hpp"
#include "bramble/safety_map.hpp"
#include "bramble/scenario.hpp"
#include "bramble/sim.hpp"
