#pragma once

#include "landcover/compositional.hpp"
#include "landcover/diagnostics.hpp"
#include "landcover/error.hpp"
#include "landcover/gmrf.hpp"
#include "landcover/grid.hpp"
#include "landcover/inference.hpp"
#include "landcover/io.hpp"
#include "landcover/model.hpp"
#include "landcover/random.hpp"
#include "landcover/regions.hpp"
#include "landcover/sampler.hpp"
#include "landcover/validation.hpp"
