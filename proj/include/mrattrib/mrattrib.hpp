#pragma once

// Multiply-robust estimation of counterfactual outcome functionals under
// shifted causal mechanisms, with Shapley / path change attribution.

#include "mrattrib/attribution.hpp"
#include "mrattrib/config.hpp"
#include "mrattrib/core.hpp"
#include "mrattrib/estimator.hpp"
#include "mrattrib/inference.hpp"
#include "mrattrib/io.hpp"
#include "mrattrib/learners.hpp"
#include "mrattrib/plan.hpp"
#include "mrattrib/rng.hpp"
#include "mrattrib/simulation.hpp"
#include "mrattrib/weights.hpp"
