#pragma once

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace wcontract::quadrature {

/// Fixed 20-point Gauss-Legendre rule on [a, b].
template <class F>
double gauss(F&& f, double a, double b) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
}

/// Adaptive Gauss-Kronrod (G7/K15) with relative tolerance `tol`.
template <class F>
double adaptive(F&& f, double a, double b, double tol = 1e-11, unsigned max_depth = 16) {
  if (a == b) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, max_depth, tol);
}

}  // namespace wcontract::quadrature
