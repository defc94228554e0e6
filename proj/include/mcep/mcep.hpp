#pragma once

// Bayesian semiparametric mixed-effects Markov chains for categorical
// sequences with exogenous categorical predictors and subject-level random
// effects: Gibbs sampling, partition-based predictor clustering, posterior
// hypothesis tests, forward simulation, and a rank-sum/permutation baseline.

#include "mcep/baseline.hpp"
#include "mcep/errors.hpp"
#include "mcep/gibbs.hpp"
#include "mcep/inference.hpp"
#include "mcep/io.hpp"
#include "mcep/matrix.hpp"
#include "mcep/model.hpp"
#include "mcep/partition.hpp"
#include "mcep/pipeline.hpp"
#include "mcep/rng.hpp"
#include "mcep/simulate.hpp"
