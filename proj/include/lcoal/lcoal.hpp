#pragma once

#include "lcoal/errors.hpp"
#include "lcoal/measure.hpp"
#include "lcoal/rates.hpp"
#include "lcoal/speed.hpp"
#include "lcoal/rng.hpp"
#include "lcoal/coalescent_sim.hpp"
#include "lcoal/limit_gaussian.hpp"
#include "lcoal/stats.hpp"
#include "lcoal/experiments.hpp"
