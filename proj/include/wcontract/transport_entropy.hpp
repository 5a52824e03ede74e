#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "wcontract/diffusion_solver.hpp"
#include "wcontract/error.hpp"
#include "wcontract/nonlinearity.hpp"
#include "wcontract/radial_measure.hpp"

namespace wcontract {

/// Internal energy sum_i U(u_i) V_i.
inline double entropy(const RadialDensity& u, const Nonlinearity& f) {
  CompensatedSum s;
  const auto& g = u.grid();
  for (std::size_t i = 0; i < u.size(); ++i) s.add(f.U(u[i]) * g.volume(i));
  return s.value();
}

struct DissipationSample {
  double t = 0;
  double w2_sq = 0;
  /// Right side of the dissipation identity; d/dt W2^2 = 2 D.
  double dissipation = 0;
  /// Central-difference estimate of (1/2) d/dt W2^2, when measured.
  double fd_derivative = std::numeric_limits<double>::quiet_NaN();
  double entropy_u = 0;
  double entropy_v = 0;
};

/// D = int_0^M (xi_v(Q_v(m)) - xi_u(Q_u(m))) (Q_v(m) - Q_u(m)) dm for the
/// monotone radial plan between u and v.
inline DissipationSample dissipation(const RadialDensity& u, const RadialDensity& v, const Nonlinearity& f) {
  if (u.grid().dim() != v.grid().dim()) throw Error(ErrorKind::InvalidParameter, "dimension mismatch");
  const double Mu = u.mass(), Mv = v.mass();
  detail::require_same_mass(Mu, Mv);
  const auto xi_u = velocity_field(u, f);
  const auto xi_v = velocity_field(v, f);
  const RadialCdf cu(u), cv(v);
  const double M = 0.5 * (Mu + Mv);
  const double w2 = integrate_mass_fractions(cu, cv, [](double, double qu, double qv) { return (qu - qv) * (qu - qv); });
  const double D = integrate_mass_fractions(
      cu, cv, [&](double, double qu, double qv) { return (xi_v(qv) - xi_u(qu)) * (qv - qu); });
  DissipationSample out;
  out.w2_sq = M * w2;
  out.dissipation = M * D;
  out.entropy_u = entropy(u, f);
  out.entropy_v = entropy(v, f);
  return out;
}

/// McCann interpolant: Q_t = (1 - t) Q_0 + t Q_1, binned conservatively onto
/// the grid of u0 (the mass in cell i is the mass fraction between the
/// preimages of its edges under Q_t).
inline RadialDensity displacement_interpolant(const RadialDensity& u0, const RadialDensity& u1, double t) {
  if (!(t >= 0 && t <= 1)) throw Error(ErrorKind::InvalidParameter, "interpolation time must lie in [0, 1]");
  if (u0.grid().dim() != u1.grid().dim()) throw Error(ErrorKind::InvalidParameter, "dimension mismatch");
  const double M0 = u0.mass(), M1 = u1.mass();
  detail::require_same_mass(M0, M1);
  if (t == 0) return u0;
  const RadialCdf c0(u0), c1(u1);
  const double Mt = (1 - t) * M0 + t * M1;
  auto Qt = [&](double s) { return (1 - t) * c0.quantile(s * M0) + t * c1.quantile(s * M1); };

  const auto& g = u0.grid();
  std::vector<double> s_edge(g.cells() + 1, 0.0);
  s_edge.back() = 1.0;
  double lo_prev = 0;
  for (std::size_t i = 1; i < g.cells(); ++i) {
    const double r = g.edge(i);
    // s_i = sup { s : Q_t(s) <= r }
    double lo = lo_prev, hi = 1.0;
    if (Qt(hi) <= r) {
      s_edge[i] = 1.0;
      lo_prev = 1.0;
      continue;
    }
    for (int it = 0; it < 400 && hi - lo > 2e-16 * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (Qt(mid) <= r) lo = mid; else hi = mid;
    }
    s_edge[i] = 0.5 * (lo + hi);
    lo_prev = lo;
  }
  std::vector<double> values(g.cells());
  for (std::size_t i = 0; i < g.cells(); ++i) {
    values[i] = std::max(0.0, Mt * (s_edge[i + 1] - s_edge[i])) / g.volume(i);
  }
  return RadialDensity(u0.grid_ptr(), std::move(values));
}

struct GeodesicScan {
  std::vector<double> t;
  std::vector<double> entropy;
  /// Smallest centred second difference U(t-h) - 2U(t) + U(t+h).
  double min_second_difference = std::numeric_limits<double>::infinity();
  double argmin_t = 0;
  /// max |U(t)| over the scan, the natural scale for the second differences.
  double scale = 0;
};

inline GeodesicScan geodesic_convexity_scan(const RadialDensity& u0, const RadialDensity& u1, const Nonlinearity& f,
                                            std::span<const double> t_grid) {
  if (t_grid.size() < 3) throw Error(ErrorKind::InvalidParameter, "geodesic scan needs three or more times");
  const double h = t_grid[1] - t_grid[0];
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (t_grid[i] < 0 || t_grid[i] > 1) throw Error(ErrorKind::InvalidParameter, "scan times must lie in [0, 1]");
    if (i > 0 && std::abs((t_grid[i] - t_grid[i - 1]) - h) > 1e-9 * std::max(h, 1e-300)) {
      throw Error(ErrorKind::InvalidParameter, "scan times must be uniformly spaced");
    }
  }
  if (!(h > 0)) throw Error(ErrorKind::InvalidParameter, "scan times must increase");
  GeodesicScan scan;
  for (double t : t_grid) {
    scan.t.push_back(t);
    scan.entropy.push_back(entropy(displacement_interpolant(u0, u1, t), f));
    scan.scale = std::max(scan.scale, std::abs(scan.entropy.back()));
  }
  for (std::size_t i = 1; i + 1 < scan.entropy.size(); ++i) {
    const double second = scan.entropy[i - 1] - 2 * scan.entropy[i] + scan.entropy[i + 1];
    if (second < scan.min_second_difference) {
      scan.min_second_difference = second;
      scan.argmin_t = scan.t[i];
    }
  }
  return scan;
}

/// n + 1 equispaced times on [0, 1].
inline std::vector<double> uniform_times(std::size_t n) {
  std::vector<double> t(n + 1);
  for (std::size_t i = 0; i <= n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n);
  return t;
}

}  // namespace wcontract
