#pragma once

// Umbrella header: the whole library in dependency order.

#include "slabdiff/common.hpp"
#include "slabdiff/elements.hpp"
#include "slabdiff/so3.hpp"
#include "slabdiff/lattice.hpp"
#include "slabdiff/igso3.hpp"
#include "slabdiff/schedule.hpp"
#include "slabdiff/neighbor.hpp"
#include "slabdiff/calculator.hpp"
#include "slabdiff/relaxer.hpp"
#include "slabdiff/anomaly.hpp"
#include "slabdiff/score_model.hpp"
#include "slabdiff/sampler.hpp"
#include "slabdiff/training.hpp"
#include "slabdiff/xyz_io.hpp"
#include "slabdiff/benchmark.hpp"
#include "slabdiff/config.hpp"
