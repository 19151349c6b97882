#pragma once

// Numerics only; driver.hpp adds configuration and persistence (Boost, OpenSSL, nlohmann_json).
#include "rtmm/angular_quadrature.hpp"
#include "rtmm/basis.hpp"
#include "rtmm/core.hpp"
#include "rtmm/dg.hpp"
#include "rtmm/mesh.hpp"
#include "rtmm/metric.hpp"
#include "rtmm/mmpde.hpp"
#include "rtmm/norms.hpp"
#include "rtmm/problems.hpp"
#include "rtmm/simplex_quadrature.hpp"
#include "rtmm/simulation.hpp"
