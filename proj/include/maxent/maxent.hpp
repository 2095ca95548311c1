#pragma once

#include "maxent/error.hpp"
#include "maxent/random.hpp"
#include "maxent/core.hpp"
#include "maxent/normal.hpp"
#include "maxent/ising.hpp"
#include "maxent/dg.hpp"
#include "maxent/entropy.hpp"
#include "maxent/hazard.hpp"
#include "maxent/network.hpp"
#include "maxent/io.hpp"
