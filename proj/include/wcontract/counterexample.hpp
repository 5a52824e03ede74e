#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wcontract/contraction.hpp"
#include "wcontract/error.hpp"
#include "wcontract/nonlinearity.hpp"
#include "wcontract/quadrature.hpp"
#include "wcontract/radial_measure.hpp"
#include "wcontract/transport_entropy.hpp"

namespace wcontract::counterexample {

/// Geometry of the necessity construction: u0 = r on B_a, v0 its image under
/// the gradient of a radial convex map that dilates B_a by (1 + delta),
/// both smoothed at scale eps.
struct Spec {
  int d = 3;
  double r = 1.0;
  double a = 1.0;
  double delta = 0.1;
  double eps = 1e-3;
  double R = 1.5;
  /// Base cell count on [0, R]; transition annuli are refined further.
  std::size_t cells = 400;
  /// Cells per eps across each transition annulus.
  double cells_per_eps = 96;

  /// Largest admissible eps (inclusive).
  double eps0() const { return std::min(delta, 1.0) * a / 10; }

  void validate() const {
    if (d < 1) throw Error(ErrorKind::InvalidParameter, "dimension must be >= 1");
    if (!(r > 0)) throw Error(ErrorKind::InvalidParameter, "plateau density must be positive");
    if (!(a > 0 && a < R)) throw Error(ErrorKind::InvalidParameter, "need 0 < a < R");
    if (!(delta > 0 && delta < (R - a) / (2 * a))) {
      throw Error(ErrorKind::InvalidParameter, "need 0 < delta < (R - a)/(2a)");
    }
    if (!(eps > 0 && eps <= eps0() * (1 + 1e-12))) {
      throw Error(ErrorKind::InvalidParameter, "need 0 < eps <= eps0 = min(delta, 1) a / 10");
    }
    if (cells < 8) throw Error(ErrorKind::InvalidParameter, "too few cells");
  }

  /// Mass of the unsmoothed plateau, c_d a^d r.
  double mass() const { return unit_ball_volume(d) * std::pow(a, d) * r; }
};

namespace detail {

inline double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * (x * (6 * x - 15) + 10);
}
inline double smoothstep_d1(double x) {
  if (x <= 0 || x >= 1) return 0;
  return 30 * x * x * (1 - x) * (1 - x);
}
inline double smoothstep_integral(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * x * x * (x * (x - 3) + 2.5);
}

/// Slope profile phi on [0, 1]: phi(0) = 1, phi(1) = 0, zero mean, with
/// vanishing first and second derivatives at both ends.  It drops to zero
/// over [0, theta] and pays back the area with a shallow polynomial bump.
struct SlopeProfile {
  double theta = 1;

  static constexpr double kBumpMax = 140.0 / 64.0;

  static double bump(double t) { return 140 * t * t * t * (1 - t) * (1 - t) * (1 - t); }
  static double bump_d1(double t) { return 420 * t * t * (1 - t) * (1 - t) * (1 - 2 * t); }
  static double bump_integral(double t) {
    return 140 * t * t * t * t * (0.25 + t * (-0.6 + t * (0.5 - t / 7)));
  }

  double value(double t) const {
    const double x = t / theta;
    return (x < 1 ? 1 - smoothstep(x) : 0.0) - 0.5 * theta * bump(t);
  }
  double d1(double t) const {
    const double x = t / theta;
    return (x < 1 ? -smoothstep_d1(x) / theta : 0.0) - 0.5 * theta * bump_d1(t);
  }
  /// int_0^t phi
  double integral(double t) const {
    const double x = std::min(t / theta, 1.0);
    return theta * (x - smoothstep_integral(x)) - 0.5 * theta * bump_integral(t);
  }
};

}  // namespace detail

/// The piecewise-linear radial profile: (1+delta) z on [0, a],
/// (z + (1+2delta) a)/2 on [a, (1+2delta) a], z beyond.
class PiecewiseMap {
 public:
  explicit PiecewiseMap(const Spec& s) : a_(s.a), delta_(s.delta), b_((1 + 2 * s.delta) * s.a) {}

  double value(double z) const {
    if (z <= a_) return (1 + delta_) * z;
    if (z <= b_) return 0.5 * (z + b_);
    return z;
  }
  double derivative(double z) const {
    if (z < a_) return 1 + delta_;
    if (z < b_) return 0.5;
    return 1.0;
  }
  double first_knot() const { return a_; }
  double second_knot() const { return b_; }

 private:
  double a_, delta_, b_;
};

inline PiecewiseMap build_psi(const Spec& s) {
  s.validate();
  return PiecewiseMap(s);
}

/// Smoothed profile psi^eps: equal to the piecewise map outside
/// (a, (1+eps) a) and ((1+2delta-eps) a, (1+2delta) a); inside each window the
/// slope moves from the outer slope to 1/2 along a C^2 profile whose mean is
/// 1/2, so the values at both window ends match the piecewise map.
class MollifiedMap {
 public:
  MollifiedMap(const Spec& s) : psi_(s), a_(s.a), b_((1 + 2 * s.delta) * s.a), h_(s.eps * s.a) {
    s.validate();
    lower_ = make_blend(1 + s.delta);
    upper_ = make_blend(1.0);
  }

  const PiecewiseMap& unsmoothed() const { return psi_; }

  /// Window ends: [a, (1+eps) a] and [(1+2delta-eps) a, (1+2delta) a].
  std::array<double, 4> breakpoints() const { return {a_, a_ + h_, b_ - h_, b_}; }

  double value(double z) const {
    if (z > a_ && z < a_ + h_) {
      const double t = (z - a_) / h_;
      return psi_.value(a_) + h_ * (kMid * t + (lower_.outer - kMid) * lower_.phi.integral(t));
    }
    if (z > b_ - h_ && z < b_) {
      const double t = (b_ - z) / h_;
      return b_ - h_ * (kMid * t + (upper_.outer - kMid) * upper_.phi.integral(t));
    }
    return psi_.value(z);
  }

  double derivative(double z) const {
    if (z > a_ && z < a_ + h_) return kMid + (lower_.outer - kMid) * lower_.phi.value((z - a_) / h_);
    if (z > b_ - h_ && z < b_) return kMid + (upper_.outer - kMid) * upper_.phi.value((b_ - z) / h_);
    if (z == a_) return lower_.outer;
    if (z == b_) return upper_.outer;
    return psi_.derivative(z);
  }

  double second_derivative(double z) const {
    if (z > a_ && z < a_ + h_) return (lower_.outer - kMid) * lower_.phi.d1((z - a_) / h_) / h_;
    if (z > b_ - h_ && z < b_) return -(upper_.outer - kMid) * upper_.phi.d1((b_ - z) / h_) / h_;
    return 0.0;
  }

  /// Inverse by bisection with Newton steps, to 1e-13 relative.
  double inverse(double y) const {
    if (y <= 0) return 0;
    // Exact on the linear pieces.
    const double ya = psi_.value(a_), ya_h = value(a_ + h_), yb_h = value(b_ - h_);
    if (y <= ya) return y / psi_.derivative(0.0);
    if (y >= b_) return y;
    if (y >= ya_h && y <= yb_h) return 2 * y - b_;
    double lo = y < ya_h ? a_ : b_ - h_;
    double hi = y < ya_h ? a_ + h_ : b_;
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double g = value(z) - y;
      if (g > 0) hi = z; else lo = z;
      double next = z - g / derivative(z);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - z) <= 1e-15 * z || hi - lo <= 1e-16 * z) return next;
      z = next;
    }
    return z;
  }

  RadialMap as_radial_map() const {
    return {[this](double z) { return value(z); }, [this](double z) { return derivative(z); },
            [this](double y) { return inverse(y); }};
  }

  /// det D^2 phi^eps at radius z.
  double jacobian(double z, int d) const {
    if (z <= 0) return std::pow(derivative(0.0), d);
    return derivative(z) * std::pow(value(z) / z, d - 1);
  }

  double jacobian_derivative(double z, int d) const {
    if (z <= 0 || d == 1) return d == 1 ? second_derivative(z) : 0.0;
    const double q = value(z), dq = derivative(z);
    const double ratio = q / z;
    return second_derivative(z) * std::pow(ratio, d - 1) +
           dq * (d - 1) * std::pow(ratio, d - 2) * (dq * z - q) / (z * z);
  }

 private:
  static constexpr double kMid = 0.5;

  struct Blend {
    double outer = 1;
    detail::SlopeProfile phi;
  };

  /// Keeps the slope >= kMid/2: theta (outer - kMid) kBumpMax / 2 <= kMid / 2.
  static Blend make_blend(double outer) {
    const double theta = std::min(1.0, kMid / ((outer - kMid) * detail::SlopeProfile::kBumpMax));
    return {outer, detail::SlopeProfile{theta}};
  }

  PiecewiseMap psi_;
  double a_, b_, h_;
  Blend lower_, upper_;
};

/// Sampled certificate of the smoothed map.
struct MollificationReport {
  double lambda = 0;       ///< max(max psi', 1/min psi')
  double sup_error = 0;    ///< ||psi^eps - psi||_inf
  double A = 0;            ///< sup_error / eps
  double min_ratio = 0;    ///< min psi^eps(z)/z
  double max_ratio = 0;    ///< max psi^eps(z)/z
};

inline MollificationReport certify(const MollifiedMap& map, const Spec& s, std::size_t samples_per_window = 4000) {
  MollificationReport rep;
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  auto visit = [&](double z) {
    const double dz = map.derivative(z);
    if (!(dz > 0)) throw Error(ErrorKind::MollificationError, "smoothed map is not increasing");
    dmin = std::min(dmin, dz);
    dmax = std::max(dmax, dz);
    rep.sup_error = std::max(rep.sup_error, std::abs(map.value(z) - map.unsmoothed().value(z)));
    if (z > 0) {
      rep.min_ratio = std::min(rep.min_ratio, map.value(z) / z);
      rep.max_ratio = std::max(rep.max_ratio, map.value(z) / z);
    }
  };
  const auto bp = map.breakpoints();
  for (std::size_t w = 0; w < 2; ++w) {
    const double lo = bp[2 * w], hi = bp[2 * w + 1];
    for (std::size_t k = 0; k <= samples_per_window; ++k) visit(lo + (hi - lo) * k / samples_per_window);
  }
  for (std::size_t k = 1; k <= 2000; ++k) visit(s.R * k / 2000.0);
  rep.lambda = std::max(dmax, 1 / dmin);
  rep.A = rep.sup_error / s.eps;
  if (rep.min_ratio < 1 - 1e-12 || rep.max_ratio > 1 + s.delta + 1e-12) {
    throw Error(ErrorKind::MollificationError, "psi^eps(z)/z left [1, 1 + delta]");
  }
  return rep;
}

inline MollifiedMap mollify(const Spec& s) {
  MollifiedMap map(s);
  certify(map, s, 400);
  return map;
}

/// Smoothed plateau: r on [0, a], eps beyond a + eps, C^2 monotone in between;
/// renormalized to the plateau mass c_d a^d r.
class MollifiedData {
 public:
  explicit MollifiedData(const Spec& s) : spec_(s), map_(s) {
    s.validate();
    const double sigma = s.d * unit_ball_volume(s.d);
    const double cd = unit_ball_volume(s.d);
    const double blend = quadrature::adaptive(
        [&](double z) { return raw(z) * sigma * std::pow(z, s.d - 1); }, s.a, s.a + s.eps);
    const double total = cd * std::pow(s.a, s.d) * s.r + blend + s.eps * cd * (std::pow(s.R, s.d) - std::pow(s.a + s.eps, s.d));
    scale_ = s.mass() / total;
  }

  const Spec& spec() const { return spec_; }
  const MollifiedMap& map() const { return map_; }
  double normalization() const { return scale_; }

  double raw(double z) const {
    if (z <= spec_.a) return spec_.r;
    if (z >= spec_.a + spec_.eps) return spec_.eps;
    return spec_.eps + (spec_.r - spec_.eps) * (1 - detail::smoothstep((z - spec_.a) / spec_.eps));
  }

  double u0(double z) const { return scale_ * raw(z); }

  double u0_derivative(double z) const {
    if (z <= spec_.a || z >= spec_.a + spec_.eps) return 0;
    return -scale_ * (spec_.r - spec_.eps) * detail::smoothstep_d1((z - spec_.a) / spec_.eps) / spec_.eps;
  }

  /// Target density at the image point psi^eps(z) (Monge-Ampere relation).
  double v0_at_preimage(double z) const { return u0(z) / map_.jacobian(z, spec_.d); }

  double v0(double y) const { return v0_at_preimage(map_.inverse(y)); }

 private:
  Spec spec_;
  MollifiedMap map_;
  double scale_ = 1;
};

/// Grid refined across every transition annulus of u0 and v0.
inline GridPtr counterexample_grid(const Spec& s) {
  const MollifiedMap map(s);
  const double h = s.eps / s.cells_per_eps;
  const double pad = 2 * s.eps;
  const auto bp = map.breakpoints();
  std::vector<RadialGrid::Refinement> windows{
      {s.a - pad, s.a + s.eps + pad, h},
      {map.value(bp[0]) - pad, map.value(std::max(bp[1], s.a + s.eps)) + pad, h},
      {map.value(bp[2]) - pad, bp[3] + pad, h},
  };
  return make_grid(RadialGrid::graded(s.d, s.R, s.R / static_cast<double>(s.cells), windows, 0.05));
}

/// Image of a radial profile under a radial map, binned exactly: cell i gets
/// the mass of the profile between the preimages of its edges.
template <class Profile>
RadialDensity pushforward_profile(GridPtr grid, Profile&& u, const RadialMap& q) {
  const auto& g = *grid;
  const double sigma = g.surface_factor();
  const int d = g.dim();
  std::vector<double> values(g.cells());
  double z_lo = 0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    const double z_hi = i + 1 == g.cells() ? g.radius() : q.invert(g.edge(i + 1), g.radius());
    const double mass =
        quadrature::gauss([&](double z) { return u(z) * sigma * std::pow(z, d - 1); }, z_lo, z_hi);
    values[i] = std::max(0.0, mass) / g.volume(i);
    z_lo = z_hi;
  }
  return RadialDensity(std::move(grid), std::move(values));
}

/// Cell averages of u0^eps and of its image v0^eps = grad phi^eps # u0^eps on a
/// common refined grid.
inline std::pair<RadialDensity, RadialDensity> build_mollified_data(const Spec& s) {
  const MollifiedData data(s);
  auto grid = counterexample_grid(s);
  auto u = RadialDensity::from_profile(grid, [&](double z) { return data.u0(z); });
  auto v = pushforward_profile(grid, [&](double z) { return data.u0(z); }, data.map().as_radial_map());
  return {std::move(u), std::move(v)};
}

struct DissipationIntegrals {
  double I1 = 0;  ///< int grad(f(v0)) . (grad phi* (y) - y) dy
  double I2 = 0;  ///< int grad(f(u0)) . (grad phi (x) - x) dx
  double sum() const { return I1 + I2; }
};

/// Both integrals as one-dimensional radial quadratures.  I1 is written in the
/// preimage variable z = (psi^eps)^{-1}(|y|), where v0(psi(z)) = u0(z)/J(z).
inline DissipationIntegrals dissipation_integrals(const Spec& s, const Nonlinearity& f) {
  const MollifiedData data(s);
  const auto& map = data.map();
  const int d = s.d;
  const double sigma = d * unit_ball_volume(d);

  DissipationIntegrals out;
  out.I2 = sigma * quadrature::adaptive(
                       [&](double z) {
                         return f.fprime(data.u0(z)) * data.u0_derivative(z) * (map.value(z) - z) * std::pow(z, d - 1);
                       },
                       s.a, s.a + s.eps);

  auto integrand1 = [&](double z) {
    const double J = map.jacobian(z, d);
    const double w = data.u0(z) / J;
    const double dw = data.u0_derivative(z) / J - data.u0(z) * map.jacobian_derivative(z, d) / (J * J);
    const double q = map.value(z);
    return f.fprime(w) * dw * (z - q) * std::pow(q, d - 1);
  };
  const auto bp = map.breakpoints();
  std::vector<double> cuts{s.a, s.a + s.eps, bp[1], bp[2], bp[3]};
  std::sort(cuts.begin(), cuts.end());
  double I1 = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] > cuts[k]) I1 += quadrature::adaptive(integrand1, cuts[k], cuts[k + 1]);
  }
  out.I1 = sigma * I1;
  return out;
}

/// Same integrals after an integration by parts (boundary terms vanish since
/// psi(z) - z is zero at z = 0 and beyond (1+2delta) a); needs no second
/// derivatives and serves as an independent route.
inline DissipationIntegrals dissipation_integrals_by_parts(const Spec& s, const Nonlinearity& f) {
  const MollifiedData data(s);
  const auto& map = data.map();
  const int d = s.d;
  const double sigma = d * unit_ball_volume(d);
  const auto bp = map.breakpoints();
  std::vector<double> cuts{0.0, s.a, s.a + s.eps, bp[1], bp[2], bp[3]};
  std::sort(cuts.begin(), cuts.end());
  auto integrate = [&](auto&& g) {
    double acc = 0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
      if (cuts[k + 1] > cuts[k]) acc += quadrature::adaptive(g, cuts[k], cuts[k + 1]);
    }
    return acc;
  };
  DissipationIntegrals out;
  // I2 = -sigma int f(u0) d/dz[(psi - z) z^{d-1}]
  out.I2 = -sigma * integrate([&](double z) {
    const double q = map.value(z), dq = map.derivative(z);
    const double dz = (dq - 1) * std::pow(z, d - 1) + (d > 1 ? (q - z) * (d - 1) * std::pow(z, d - 2) : 0.0);
    return f.f(data.u0(z)) * dz;
  });
  // I1 = -sigma int f(v0(psi(z))) d/dz[(z - psi) psi^{d-1}]
  out.I1 = -sigma * integrate([&](double z) {
    const double q = map.value(z), dq = map.derivative(z);
    const double dz = (1 - dq) * std::pow(q, d - 1) + (d > 1 ? (z - q) * (d - 1) * std::pow(q, d - 2) * dq : 0.0);
    return f.f(data.v0_at_preimage(z)) * dz;
  });
  return out;
}

/// W2^2(u0^eps, v0^eps) = int (psi^eps(|x|) - |x|)^2 u0^eps(x) dx, the map being
/// the gradient of a convex function and hence optimal.
inline double initial_w2_sq(const Spec& s) {
  const MollifiedData data(s);
  const auto& map = data.map();
  const double sigma = s.d * unit_ball_volume(s.d);
  const auto bp = map.breakpoints();
  std::vector<double> cuts{0.0, s.a, s.a + s.eps, bp[1], bp[2], bp[3]};
  std::sort(cuts.begin(), cuts.end());
  double acc = 0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] > cuts[k]) {
      acc += quadrature::adaptive(
          [&](double z) {
            const double dz = map.value(z) - z;
            return dz * dz * data.u0(z) * sigma * std::pow(z, s.d - 1);
          },
          cuts[k], cuts[k + 1]);
    }
  }
  return acc;
}

/// Limit of I1 + I2 as eps -> 0:
///   delta a^d |S^{d-1}| [(1+delta)^{d-1} f(r (1+delta)^{-d}) - f(r)],
/// |S^{d-1}| = d c_d being the area of the unit sphere.
inline double dissipation_limit(const Nonlinearity& f, int d, double r, double a, double delta) {
  const double bracket = std::pow(1 + delta, d - 1) * f.f(r * std::pow(1 + delta, -d)) - f.f(r);
  return delta * std::pow(a, d) * d * unit_ball_volume(d) * bracket;
}

/// The same expression with the unit-ball volume c_d in place of the sphere
/// area; smaller than `dissipation_limit` by exactly the factor d.
inline double dissipation_limit_ball_volume_form(const Nonlinearity& f, int d, double r, double a, double delta) {
  return dissipation_limit(f, d, r, a, delta) / d;
}

/// [(1+delta)^{d-1} f(r (1+delta)^{-d}) - f(r)] / delta, which tends to
/// (d-1) f(r) - d r f'(r) as delta -> 0.
inline double rescaled_limit_bracket(const Nonlinearity& f, int d, double r, double delta) {
  return (std::pow(1 + delta, d - 1) * f.f(r * std::pow(1 + delta, -d)) - f.f(r)) / delta;
}

/// Observed order p of a sequence v(eps) ~ L + C eps^p from its last three
/// entries (eps decreasing).
inline std::optional<double> observed_order(std::span<const double> eps, std::span<const double> values) {
  const std::size_t n = eps.size();
  if (n < 3 || values.size() != n) return std::nullopt;
  const double e1 = eps[n - 3], e2 = eps[n - 2], e3 = eps[n - 1];
  const double v1 = values[n - 3], v2 = values[n - 2], v3 = values[n - 1];
  const double target = (v1 - v2) / (v2 - v3);
  if (!std::isfinite(target) || target <= 0) return std::nullopt;
  auto ratio = [&](double p) { return (std::pow(e1, p) - std::pow(e2, p)) / (std::pow(e2, p) - std::pow(e3, p)); };
  double lo = 1e-3, hi = 6;
  double rlo = ratio(lo) - target, rhi = ratio(hi) - target;
  if (rlo * rhi > 0) return std::nullopt;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double rm = ratio(mid) - target;
    if ((rm > 0) == (rlo > 0)) {
      lo = mid;
      rlo = rm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// Exponents p_k of the error expansion v(eps) = L + sum_k C_k eps^{p_k}.
/// For a power law the floor density contributes f(eps) = eps^m, the
/// smoothing widths contribute eps, and the leading cross term is eps^{1+m}.
inline std::vector<double> error_exponents(const Nonlinearity& f) {
  std::vector<double> p{1.0, 2.0};
  if (const auto m = f.exponent()) p = {*m, 1.0, 1.0 + *m};
  std::sort(p.begin(), p.end());
  p.erase(std::unique(p.begin(), p.end(), [](double x, double y) { return std::abs(x - y) < 1e-12; }), p.end());
  return p;
}

/// Generalized Richardson: fits L + sum_k C_k eps^{p_k} exactly through the
/// last k + 1 entries, k = min(#exponents, n - 1), and returns L.
inline double extrapolate(std::span<const double> eps, std::span<const double> values, std::span<const double> exponents) {
  const std::size_t n = eps.size();
  if (n < 2 || values.size() != n) throw Error(ErrorKind::InvalidParameter, "extrapolation needs two points");
  if (exponents.empty()) throw Error(ErrorKind::InvalidParameter, "extrapolation needs an error exponent");
  const std::size_t k = std::min(exponents.size(), n - 1);
  const std::size_t rows = k + 1;
  std::vector<std::vector<double>> A(rows, std::vector<double>(rows + 1));
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t j = n - rows + i;
    A[i][0] = 1;
    for (std::size_t c = 0; c < k; ++c) A[i][c + 1] = std::pow(eps[j], exponents[c]);
    A[i][rows] = values[j];
  }
  // Gaussian elimination with partial pivoting.
  for (std::size_t c = 0; c < rows; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < rows; ++i) {
      if (std::abs(A[i][c]) > std::abs(A[piv][c])) piv = i;
    }
    std::swap(A[c], A[piv]);
    if (A[c][c] == 0) throw Error(ErrorKind::DivisionGuard, "degenerate extrapolation system");
    for (std::size_t i = c + 1; i < rows; ++i) {
      const double l = A[i][c] / A[c][c];
      for (std::size_t q = c; q <= rows; ++q) A[i][q] -= l * A[c][q];
    }
  }
  std::vector<double> x(rows);
  for (std::size_t c = rows; c-- > 0;) {
    double acc = A[c][rows];
    for (std::size_t q = c + 1; q < rows; ++q) acc -= A[c][q] * x[q];
    x[c] = acc / A[c][c];
  }
  return x[0];
}

struct SweepRow {
  int d = 0;
  double m = std::numeric_limits<double>::quiet_NaN();
  double r = 0, a = 0, delta = 0, eps = 0;
  DissipationIntegrals integrals;
  double limit = 0;
  double w2_initial_sq = 0;
};

struct ConvergenceStudy {
  std::vector<SweepRow> rows;
  std::vector<double> exponents;
  std::optional<double> observed_order;
  double extrapolated = 0;
  double limit = 0;
  double limit_ball_volume_form = 0;
  double w2_limit_sq = 0;  ///< M delta^2 a^2 d/(d+2)
};

/// I1 + I2 over decreasing eps, with the extrapolated eps -> 0 value.
inline ConvergenceStudy convergence_study(Spec s, const Nonlinearity& f, std::span<const double> eps_values) {
  ConvergenceStudy out;
  std::vector<double> eps, sums;
  for (double e : eps_values) {
    s.eps = e;
    SweepRow row;
    row.d = s.d;
    if (auto m = f.exponent()) row.m = *m;
    row.r = s.r;
    row.a = s.a;
    row.delta = s.delta;
    row.eps = e;
    row.integrals = dissipation_integrals(s, f);
    row.limit = dissipation_limit(f, s.d, s.r, s.a, s.delta);
    row.w2_initial_sq = initial_w2_sq(s);
    eps.push_back(e);
    sums.push_back(row.integrals.sum());
    out.rows.push_back(row);
  }
  out.exponents = error_exponents(f);
  out.observed_order = observed_order(eps, sums);
  out.extrapolated = extrapolate(eps, sums, out.exponents);
  out.limit = dissipation_limit(f, s.d, s.r, s.a, s.delta);
  out.limit_ball_volume_form = dissipation_limit_ball_volume_form(f, s.d, s.r, s.a, s.delta);
  out.w2_limit_sq = s.mass() * s.delta * s.delta * s.a * s.a * s.d / (s.d + 2.0);
  return out;
}

inline void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "d,m,r,a,delta,eps,I1,I2,I1_plus_I2,limit_formula,w2_initial_sq\n";
  for (const auto& row : rows) {
    os << row.d << ',' << format_double(row.m) << ',' << format_double(row.r) << ',' << format_double(row.a) << ','
       << format_double(row.delta) << ',' << format_double(row.eps) << ',' << format_double(row.integrals.I1) << ','
       << format_double(row.integrals.I2) << ',' << format_double(row.integrals.sum()) << ','
       << format_double(row.limit) << ',' << format_double(row.w2_initial_sq) << '\n';
  }
}

/// Co-evolves u0^eps and v0^eps.  The report carries D(0) (from the sampled
/// velocity fields) and the first time W2 grew, if it did.
inline ExperimentReport contraction_violation_experiment(const Spec& s, const Nonlinearity& f, SolverConfig cfg,
                                                         CoEvolveOptions opt) {
  s.validate();
  auto [u0, v0] = build_mollified_data(s);
  cfg.floor = 0;
  auto rep = co_evolve(u0, v0, f, cfg, opt);
  if (std::isnan(rep.initial_dissipation)) rep.initial_dissipation = dissipation(u0, v0, f).dissipation;
  const std::vector<double> probe{s.r};
  const auto cond = mccann_holds(f, s.d, probe);
  rep.metadata.emplace_back("nonlinearity", f.describe());
  rep.metadata.emplace_back("d", std::to_string(s.d));
  rep.metadata.emplace_back("r", format_double(s.r));
  rep.metadata.emplace_back("a", format_double(s.a));
  rep.metadata.emplace_back("delta", format_double(s.delta));
  rep.metadata.emplace_back("eps", format_double(s.eps));
  rep.metadata.emplace_back("R", format_double(s.R));
  rep.metadata.emplace_back("cells", std::to_string(u0.size()));
  rep.metadata.emplace_back("condition_at_r", cond.holds ? "holds" : "violated");
  rep.metadata.emplace_back("limit_of_dissipation", format_double(dissipation_limit(f, s.d, s.r, s.a, s.delta)));
  return rep;
}

}  // namespace wcontract::counterexample
