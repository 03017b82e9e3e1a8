#pragma once

#include "shift_core.hpp"
#include "potentials.hpp"
#include "rpf.hpp"
#include "grid_haar.hpp"
#include "aniso.hpp"
#include "bilateral.hpp"
