#pragma once

#include "perfhom/error.hpp"
#include "perfhom/geometry.hpp"
#include "perfhom/kinetics.hpp"
#include "perfhom/linalg.hpp"
#include "perfhom/cell_problems.hpp"
#include "perfhom/micro_sim.hpp"
#include "perfhom/macro_sim.hpp"
#include "perfhom/homogenize.hpp"
#include "perfhom/config.hpp"
#include "perfhom/io.hpp"
