#pragma once

#include "sudfer/bounds.hpp"
#include "sudfer/error.hpp"
#include "sudfer/estimator.hpp"
#include "sudfer/experiment.hpp"
#include "sudfer/gaussian.hpp"
#include "sudfer/interpolation.hpp"
#include "sudfer/monte_carlo.hpp"
#include "sudfer/random.hpp"
#include "sudfer/smoothmax.hpp"
