#pragma once

#include "dggqr/csv.hpp"
#include "dggqr/dgg_core.hpp"
#include "dggqr/errors.hpp"
#include "dggqr/fit.hpp"
#include "dggqr/kaplan_meier.hpp"
#include "dggqr/mcmc.hpp"
#include "dggqr/model.hpp"
#include "dggqr/outputs.hpp"
#include "dggqr/parallel.hpp"
#include "dggqr/simgen.hpp"
