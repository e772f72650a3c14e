#pragma once

// Umbrella header.

#include "hemo_uq/config.hpp"
#include "hemo_uq/distributions.hpp"
#include "hemo_uq/errors.hpp"
#include "hemo_uq/evaluator.hpp"
#include "hemo_uq/experiment.hpp"
#include "hemo_uq/inputs.hpp"
#include "hemo_uq/io.hpp"
#include "hemo_uq/network.hpp"
#include "hemo_uq/parallel.hpp"
#include "hemo_uq/propagation.hpp"
#include "hemo_uq/random.hpp"
#include "hemo_uq/sensitivity.hpp"
#include "hemo_uq/solver.hpp"
#include "hemo_uq/statistics.hpp"
#include "hemo_uq/waveform.hpp"
