#pragma once

#include "wcontract/error.hpp"
#include "wcontract/interpolation.hpp"
#include "wcontract/quadrature.hpp"
#include "wcontract/nonlinearity.hpp"
#include "wcontract/radial_measure.hpp"
#include "wcontract/diffusion_solver.hpp"
#include "wcontract/transport_entropy.hpp"
#include "wcontract/contraction.hpp"
#include "wcontract/counterexample.hpp"
#include "wcontract/harness.hpp"
