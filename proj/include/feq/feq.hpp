#pragma once

#include "feq/errors.hpp"
#include "feq/linear_system.hpp"
#include "feq/fem.hpp"
#include "feq/newmark.hpp"
#include "feq/ising.hpp"
#include "feq/samplers.hpp"
#include "feq/search.hpp"
#include "feq/spanning_sets.hpp"
#include "feq/ttt.hpp"
