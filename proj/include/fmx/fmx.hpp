#pragma once

// Umbrella header for the fmx toolkit.

#include "fmx/core.hpp"
#include "fmx/coupled.hpp"
#include "fmx/errors.hpp"
#include "fmx/fft.hpp"
#include "fmx/fmo.hpp"
#include "fmx/grid.hpp"
#include "fmx/mediator.hpp"
#include "fmx/rism.hpp"
#include "fmx/workflow.hpp"
