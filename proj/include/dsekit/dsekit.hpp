#pragma once

// Convenience umbrella: the whole toolkit in one include.

#include "dsekit/errors.hpp"
#include "dsekit/matrix.hpp"
#include "dsekit/prng.hpp"
#include "dsekit/filter.hpp"
#include "dsekit/machine.hpp"
#include "dsekit/noise.hpp"
#include "dsekit/scenario.hpp"
#include "dsekit/metrics.hpp"
#include "dsekit/config.hpp"
#include "dsekit/experiment.hpp"
