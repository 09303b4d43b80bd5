#pragma once

#include <selfsim/errors.hpp>
#include <selfsim/symbolic.hpp>
#include <selfsim/ifs.hpp>
#include <selfsim/quadrature.hpp>
#include <selfsim/expression.hpp>
#include <selfsim/model.hpp>
#include <selfsim/parallel.hpp>
#include <selfsim/galerkin.hpp>
#include <selfsim/kernel_cache.hpp>
#include <selfsim/timestep.hpp>
#include <selfsim/analysis.hpp>

namespace selfsim {
inline constexpr const char* kVersion = "0.1.0";
}
