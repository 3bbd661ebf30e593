#pragma once

#include "tollsub/errors.hpp"
#include "tollsub/polynomial.hpp"
#include "tollsub/netmodel.hpp"
#include "tollsub/instance_io.hpp"
#include "tollsub/incentives.hpp"
#include "tollsub/equilibrium.hpp"
#include "tollsub/poa.hpp"
#include "tollsub/experiments.hpp"
