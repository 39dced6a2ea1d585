#pragma once

#include "obbm/baselines.hpp"
#include "obbm/bench.hpp"
#include "obbm/evaluate.hpp"
#include "obbm/exact_dp.hpp"
#include "obbm/generators.hpp"
#include "obbm/instance.hpp"
#include "obbm/locality.hpp"
#include "obbm/lp.hpp"
#include "obbm/neural.hpp"
#include "obbm/offline_opt.hpp"
#include "obbm/policy.hpp"
#include "obbm/rng.hpp"
