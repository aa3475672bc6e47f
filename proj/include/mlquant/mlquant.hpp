#pragma once

#include "mlquant/classify.hpp"
#include "mlquant/common.hpp"
#include "mlquant/dataset.hpp"
#include "mlquant/experiment.hpp"
#include "mlquant/metrics.hpp"
#include "mlquant/modelsel.hpp"
#include "mlquant/protocol.hpp"
#include "mlquant/quantify_base.hpp"
#include "mlquant/quantify_ml.hpp"
#include "mlquant/rng.hpp"
#include "mlquant/stratify.hpp"
#include "mlquant/synth.hpp"
