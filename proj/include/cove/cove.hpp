#pragma once

// Umbrella header for the CoVE session-aware recommendation toolkit.

#include "cove/common.hpp"
#include "cove/config.hpp"
#include "cove/checkpoint.hpp"
#include "cove/data.hpp"
#include "cove/evaluation.hpp"
#include "cove/experts.hpp"
#include "cove/fusion.hpp"
#include "cove/gating.hpp"
#include "cove/gradients.hpp"
#include "cove/model.hpp"
#include "cove/objective.hpp"
#include "cove/trainer.hpp"
