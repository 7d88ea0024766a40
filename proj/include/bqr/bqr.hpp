#pragma once

#include "bqr/core.hpp"
#include "bqr/dss.hpp"
#include "bqr/error.hpp"
#include "bqr/forecast.hpp"
#include "bqr/gibbs.hpp"
#include "bqr/io.hpp"
#include "bqr/parallel.hpp"
#include "bqr/priors.hpp"
#include "bqr/random.hpp"
#include "bqr/simlab.hpp"
