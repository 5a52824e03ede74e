#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "wcontract/error.hpp"
#include "wcontract/quadrature.hpp"

namespace wcontract {

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

/// Compensated (Neumaier) summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0;
  double carry_ = 0;
};

/// Shells 0 = r_0 < r_1 < ... < r_N = R of the ball B_R in R^d.  Cell i is
/// the shell r_i <= |x| < r_{i+1}; cell 0 is a full ball.
class RadialGrid {
 public:
  static RadialGrid uniform(int d, double R, std::size_t n) {
    if (n == 0) throw Error(ErrorKind::InvalidParameter, "grid needs at least one cell");
    std::vector<double> edges(n + 1);
    for (std::size_t i = 0; i <= n; ++i) edges[i] = R * static_cast<double>(i) / static_cast<double>(n);
    edges.back() = R;
    return RadialGrid(d, std::move(edges));
  }

  /// Window [lo, hi] to be resolved with cells of width `h`.
  struct Refinement {
    double lo = 0;
    double hi = 0;
    double h = 0;
  };

  /// Cells of width at most `h_max`, shrinking to `h` inside each refinement
  /// window and growing linearly (slope `growth`) away from it.
  static RadialGrid graded(int d, double R, double h_max, std::span<const Refinement> windows, double growth = 0.1) {
    if (!(R > 0) || !(h_max > 0) || !(growth > 0)) throw Error(ErrorKind::InvalidParameter, "bad graded grid");
    auto size_at = [&](double rho) {
      double h = h_max;
      for (const auto& w : windows) {
        const double dist = rho < w.lo ? w.lo - rho : (rho > w.hi ? rho - w.hi : 0.0);
        h = std::min(h, w.h + growth * dist);
      }
      return h;
    };
    std::vector<double> edges{0.0};
    while (edges.back() < R) {
      const double rho = edges.back();
      // Look ahead so a window is never stepped over.
      double h = size_at(rho);
      h = std::min(h, size_at(rho + h));
      edges.push_back(rho + h);
    }
    if (edges.size() > 2 && R - edges[edges.size() - 2] < 0.5 * (edges.back() - edges[edges.size() - 2])) {
      edges.pop_back();
    }
    edges.back() = R;
    return RadialGrid(d, std::move(edges));
  }

  RadialGrid(int d, std::vector<double> edges) : d_(d), edges_(std::move(edges)) {
    if (d_ < 1) throw Error(ErrorKind::InvalidParameter, "dimension must be >= 1");
    if (edges_.size() < 2 || edges_.front() != 0.0) {
      throw Error(ErrorKind::InvalidParameter, "grid edges must start at 0 and contain one or more cells");
    }
    for (std::size_t i = 1; i < edges_.size(); ++i) {
      if (!(edges_[i] > edges_[i - 1])) throw Error(ErrorKind::InvalidParameter, "grid edges must increase");
    }
    c_d_ = unit_ball_volume(d_);
    edge_pow_.resize(edges_.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) edge_pow_[i] = std::pow(edges_[i], d_);
    volumes_.resize(cells());
    for (std::size_t i = 0; i < cells(); ++i) volumes_[i] = c_d_ * (edge_pow_[i + 1] - edge_pow_[i]);
  }

  int dim() const { return d_; }
  double radius() const { return edges_.back(); }
  std::size_t cells() const { return edges_.size() - 1; }
  std::span<const double> edges() const { return edges_; }
  std::span<const double> volumes() const { return volumes_; }
  double edge(std::size_t i) const { return edges_[i]; }
  /// r_i^d, cached.
  double edge_pow(std::size_t i) const { return edge_pow_[i]; }
  double volume(std::size_t i) const { return volumes_[i]; }
  double center(std::size_t i) const { return 0.5 * (edges_[i] + edges_[i + 1]); }
  double width(std::size_t i) const { return edges_[i + 1] - edges_[i]; }
  double unit_ball() const { return c_d_; }
  /// Area of the unit sphere, d c_d.
  double surface_factor() const { return d_ * c_d_; }
  double ball_volume(double rho) const { return c_d_ * std::pow(rho, d_); }

  std::size_t locate(double rho) const {
    const auto it = std::upper_bound(edges_.begin(), edges_.end(), rho);
    if (it == edges_.begin()) return 0;
    return std::min(static_cast<std::size_t>(it - edges_.begin()) - 1, cells() - 1);
  }

  bool operator==(const RadialGrid& other) const { return d_ == other.d_ && edges_ == other.edges_; }

 private:
  int d_;
  std::vector<double> edges_;
  std::vector<double> edge_pow_;
  std::vector<double> volumes_;
  double c_d_ = 1;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

inline GridPtr make_grid(RadialGrid grid) { return std::make_shared<const RadialGrid>(std::move(grid)); }

/// Piecewise-constant radial density: `values[i]` is the average over cell i.
class RadialDensity {
 public:
  RadialDensity(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
    if (!grid_) throw Error(ErrorKind::InvalidParameter, "density without grid");
    if (values_.size() != grid_->cells()) throw Error(ErrorKind::InvalidParameter, "density size != cell count");
    for (double v : values_) {
      if (!(v >= 0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidParameter, "density must be finite and >= 0");
    }
  }

  /// Cell averages of a radial profile, integrated with Gauss-Legendre per cell.
  template <class Profile>
  static RadialDensity from_profile(GridPtr grid, Profile&& profile) {
    const int d = grid->dim();
    const double sigma = grid->surface_factor();
    std::vector<double> values(grid->cells());
    for (std::size_t i = 0; i < grid->cells(); ++i) {
      const double mass = quadrature::gauss(
          [&](double rho) { return profile(rho) * sigma * std::pow(rho, d - 1); }, grid->edge(i), grid->edge(i + 1));
      values[i] = std::max(0.0, mass / grid->volume(i));
    }
    return RadialDensity(std::move(grid), std::move(values));
  }

  static RadialDensity constant(GridPtr grid, double value) {
    std::vector<double> values(grid->cells(), value);
    return RadialDensity(std::move(grid), std::move(values));
  }

  const RadialGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return values_.size(); }

  double mass() const {
    CompensatedSum s;
    for (std::size_t i = 0; i < values_.size(); ++i) s.add(values_[i] * grid_->volume(i));
    return s.value();
  }

  double min() const { return *std::min_element(values_.begin(), values_.end()); }
  double max() const { return *std::max_element(values_.begin(), values_.end()); }

  RadialDensity scaled(double factor) const {
    std::vector<double> v(values_);
    for (double& x : v) x *= factor;
    return RadialDensity(grid_, std::move(v));
  }

  RadialDensity with_mass(double target) const { return scaled(target / mass()); }

 private:
  GridPtr grid_;
  std::vector<double> values_;
};

/// m(r_j) = sum_{i<j} u_i V_i at every edge (N + 1 entries).
inline std::vector<double> cumulative_mass(const RadialDensity& u) {
  const auto& g = u.grid();
  std::vector<double> cum(g.cells() + 1, 0.0);
  CompensatedSum s;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    s.add(u[i] * g.volume(i));
    cum[i + 1] = s.value();
  }
  return cum;
}

/// Cumulative mass function of a radial density and its exact inverse (for
/// piecewise-constant densities the mass inside radius rho is a polynomial
/// in rho^d on each cell).
class RadialCdf {
 public:
  explicit RadialCdf(const RadialDensity& u)
      : grid_(u.grid_ptr()), values_(u.values().begin(), u.values().end()), cum_(cumulative_mass(u)) {}

  double mass() const { return cum_.back(); }
  const RadialGrid& grid() const { return *grid_; }
  std::span<const double> cumulative() const { return cum_; }
  double value(std::size_t i) const { return values_[i]; }

  /// Mass inside radius rho.
  double cumulative(double rho) const {
    if (rho <= 0) return 0;
    if (rho >= grid_->radius()) return mass();
    const std::size_t i = grid_->locate(rho);
    return cum_[i] + values_[i] * grid_->unit_ball() * (std::pow(rho, grid_->dim()) - grid_->edge_pow(i));
  }

  /// Smallest radius enclosing mass m.
  double quantile(double m) const {
    const double M = mass();
    if (!(m >= 0) || m > M * (1 + 1e-12)) {
      throw Error(ErrorKind::InvalidParameter, "quantile mass outside [0, M]");
    }
    if (m <= 0) return 0;
    if (m >= M) {
      // Last cell carrying mass.
      std::size_t j = cum_.size() - 1;
      while (j > 0 && cum_[j - 1] >= M) --j;
      return grid_->edge(j);
    }
    const auto it = std::lower_bound(cum_.begin() + 1, cum_.end(), m);
    const std::size_t cell = static_cast<std::size_t>(it - cum_.begin()) - 1;
    return in_cell(cell, m);
  }

  /// Inverse of the cumulative mass restricted to one cell.
  double in_cell(std::size_t cell, double m) const {
    const double lo = grid_->edge(cell);
    const double hi = grid_->edge(cell + 1);
    if (values_[cell] <= 0) return lo;
    const double pow_d = grid_->edge_pow(cell) + (m - cum_[cell]) / (values_[cell] * grid_->unit_ball());
    const double rho = grid_->dim() == 1 ? pow_d : std::pow(std::max(pow_d, 0.0), 1.0 / grid_->dim());
    return std::clamp(rho, lo, hi);
  }

 private:
  GridPtr grid_;
  std::vector<double> values_;
  std::vector<double> cum_;
};

inline double quantile(const RadialDensity& u, double m) { return RadialCdf(u).quantile(m); }

/// Radial optimal plan between two equal-mass measures, sampled on a uniform
/// mass grid: the Brenier map is |x| -> Q_v(m_u(|x|)).
struct QuantilePlan {
  double mass = 0;
  std::vector<double> masses;
  std::vector<double> q_u;
  std::vector<double> q_v;
};

struct W2Result {
  double w2 = 0;
  double w2_sq = 0;
  QuantilePlan plan;
};

namespace detail {

inline void require_same_mass(double mu, double mv, double rel_tol = 1e-8) {
  if (!(mu > 0) || !(mv > 0)) throw Error(ErrorKind::InvalidParameter, "measures must carry positive mass");
  if (std::abs(mu - mv) > rel_tol * std::max(mu, mv)) {
    std::ostringstream os;
    os.precision(16);
    os << "masses differ: " << mu << " vs " << mv;
    throw Error(ErrorKind::MassMismatch, os.str());
  }
}

}  // namespace detail

/// Integrates g(s, Q_u, Q_v) ds over mass fractions s in [0, 1], where Q_u and
/// Q_v are the radial quantiles at fractions s of the respective masses.  The
/// fraction axis is split at every cell boundary of either measure, so both
/// quantiles are smooth on each piece; the first piece is integrated in the
/// variable s = s_1 tau^d which removes the s^{1/d} behaviour at the origin.
template <class G>
double integrate_mass_fractions(const RadialCdf& cu, const RadialCdf& cv, G&& g) {
  using Rule = boost::math::quadrature::gauss<double, 10>;
  const auto cum_u = cu.cumulative();
  const auto cum_v = cv.cumulative();
  const double Mu = cu.mass();
  const double Mv = cv.mass();
  const int d = cu.grid().dim();
  const std::size_t nu = cu.grid().cells(), nv = cv.grid().cells();

  // Advance to the next cell carrying mass (or stay on the last one).
  auto next_massive = [](std::span<const double> cum, std::size_t i, std::size_t n) {
    while (i + 1 < n && !(cum[i + 1] > cum[i])) ++i;
    return i;
  };
  std::size_t iu = next_massive(cum_u, 0, nu);
  std::size_t iv = next_massive(cum_v, 0, nv);

  CompensatedSum total;
  double s_lo = 0;
  bool first = true;
  while (s_lo < 1.0) {
    const double su = iu + 1 >= nu ? 1.0 : cum_u[iu + 1] / Mu;
    const double sv = iv + 1 >= nv ? 1.0 : cum_v[iv + 1] / Mv;
    const double s_hi = std::min({su, sv, 1.0});
    if (s_hi > s_lo) {
      auto at = [&](double s) { return g(s, cu.in_cell(iu, s * Mu), cv.in_cell(iv, s * Mv)); };
      if (first) {
        const double span = s_hi;
        total.add(Rule::integrate(
            [&](double tau) {
              const double tp = std::pow(tau, d - 1);
              return at(span * tp * tau) * d * span * tp;
            },
            0.0, 1.0));
        first = false;
      } else {
        total.add(Rule::integrate(at, s_lo, s_hi));
      }
      s_lo = s_hi;
    }
    const bool u_done = su <= s_hi && iu + 1 < nu;
    const bool v_done = sv <= s_hi && iv + 1 < nv;
    if (!u_done && !v_done) break;
    if (u_done) iu = next_massive(cum_u, iu + 1, nu);
    if (v_done) iv = next_massive(cum_v, iv + 1, nv);
  }
  return total.value();
}

/// Samples the monotone radial plan on K uniform mass bins (K + 1 nodes).
inline QuantilePlan sample_plan(const RadialCdf& cu, const RadialCdf& cv, std::size_t K) {
  if (K == 0) throw Error(ErrorKind::InvalidParameter, "plan resolution must be positive");
  QuantilePlan plan;
  plan.mass = 0.5 * (cu.mass() + cv.mass());
  plan.masses.resize(K + 1);
  plan.q_u.resize(K + 1);
  plan.q_v.resize(K + 1);
  for (std::size_t j = 0; j <= K; ++j) {
    const double s = static_cast<double>(j) / static_cast<double>(K);
    plan.masses[j] = s * plan.mass;
    plan.q_u[j] = cu.quantile(std::min(s * cu.mass(), cu.mass()));
    plan.q_v[j] = cv.quantile(std::min(s * cv.mass(), cv.mass()));
  }
  return plan;
}

/// W2 between equal-mass concentric radial measures,
/// W2^2 = int_0^M (Q_u(m) - Q_v(m))^2 dm.  K is the resolution of the returned
/// plan (0 selects 4 N); the distance itself is integrated piecewise exactly.
inline W2Result w2_radial(const RadialDensity& u, const RadialDensity& v, std::size_t K = 0) {
  if (u.grid().dim() != v.grid().dim()) throw Error(ErrorKind::InvalidParameter, "dimension mismatch");
  const double Mu = u.mass(), Mv = v.mass();
  detail::require_same_mass(Mu, Mv);
  const RadialCdf cu(u), cv(v);
  const double M = 0.5 * (Mu + Mv);
  const double integral =
      integrate_mass_fractions(cu, cv, [](double, double qu, double qv) { return (qu - qv) * (qu - qv); });
  W2Result out;
  out.w2_sq = std::max(0.0, M * integral);
  out.w2 = std::sqrt(out.w2_sq);
  out.plan = sample_plan(cu, cv, K == 0 ? 4 * std::max(u.size(), v.size()) : K);
  return out;
}

/// Increasing radial map z -> q(z) on [0, R] with derivative and inverse;
/// its gradient form is x -> q(|x|) x/|x|.
struct RadialMap {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
  std::function<double(double)> inverse;  ///< optional; bisection is used when empty

  static RadialMap scaling(double factor) {
    return {[factor](double z) { return factor * z; }, [factor](double) { return factor; },
            [factor](double y) { return y / factor; }};
  }

  static RadialMap identity() { return scaling(1.0); }

  /// Inverse on [q(0), q(R)] by bisection with Newton acceleration.
  double invert(double y, double R) const {
    if (inverse) return inverse(y);
    double lo = 0, hi = R;
    if (y <= value(lo)) return lo;
    if (y >= value(hi)) return hi;
    double z = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
      const double fz = value(z) - y;
      if (fz > 0) hi = z; else lo = z;
      const double dz = derivative(z);
      double next = dz > 0 ? z - fz / dz : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - z) <= 1e-15 * std::max(1.0, std::abs(z)) || hi - lo <= 1e-15 * R) return next;
      z = next;
    }
    return z;
  }
};

/// det of the Hessian of x -> int_0^{|x|} q: eigenvalue q'(z) once (radial
/// direction) and q(z)/z with multiplicity d - 1.
inline double radial_jacobian(const RadialMap& q, double z, int d) {
  const double dq = q.derivative(z);
  if (z <= 0) return std::pow(dq, d);
  return dq * std::pow(q.value(z) / z, d - 1);
}

/// Image measure of u under the radial map q: the mass of u in
/// [q^{-1}(r_i), q^{-1}(r_{i+1})] lands in cell i, which is the cell average
/// of the Monge-Ampere density u(q^{-1}(y)) / det D^2 phi(q^{-1}(y)).
inline RadialDensity pushforward_radial(const RadialDensity& u, const RadialMap& q) {
  const auto& g = u.grid();
  const double R = g.radius();
  // Certify monotonicity on a sampling twice as fine as the grid.
  double prev = q.value(0.0);
  if (prev < -1e-14 * R) throw Error(ErrorKind::InvalidMap, "radial map must satisfy q(0) >= 0");
  for (std::size_t i = 0; i < g.cells(); ++i) {
    for (double z : {g.center(i), g.edge(i + 1)}) {
      const double qz = q.value(z);
      if (!(qz > prev) || !(q.derivative(z) > 0)) {
        throw Error(ErrorKind::InvalidMap, "radial map is not strictly increasing near z = " + std::to_string(z));
      }
      prev = qz;
    }
  }
  if (prev > R * (1 + 1e-12)) throw Error(ErrorKind::InvalidMap, "radial map leaves the ball: q(R) > R");

  const RadialCdf cdf(u);
  std::vector<double> values(g.cells());
  double below = 0;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    const double upper = i + 1 == g.cells() ? cdf.mass() : cdf.cumulative(q.invert(g.edge(i + 1), R));
    values[i] = std::max(0.0, upper - below) / g.volume(i);
    below = std::max(below, upper);
  }
  return RadialDensity(u.grid_ptr(), std::move(values));
}

/// Writes `# d R N` followed by `r_left r_right value` lines.
inline void write_density(std::ostream& os, const RadialDensity& u) {
  const auto& g = u.grid();
  char buf[128];
  std::snprintf(buf, sizeof buf, "# %d %.17g %zu\n", g.dim(), g.radius(), g.cells());
  os << buf;
  for (std::size_t i = 0; i < g.cells(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", g.edge(i), g.edge(i + 1), u[i]);
    os << buf;
  }
}

inline void write_density(const std::string& path, const RadialDensity& u) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::IoError, "cannot write density file '" + path + "'");
  write_density(os, u);
}

inline RadialDensity read_density(std::istream& is) {
  std::string line;
  int d = 0;
  double R = 0;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    char hash = 0;
    if (!(hs >> hash) || hash != '#' || !(hs >> d >> R >> n)) {
      throw Error(ErrorKind::ConfigError, "density file must start with '# d R N'");
    }
    break;
  }
  if (n == 0) throw Error(ErrorKind::ConfigError, "density file declares no cells");
  std::vector<double> edges{0.0}, values;
  while (values.size() < n && std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double lo = 0, hi = 0, v = 0;
    if (!(ls >> lo >> hi >> v)) throw Error(ErrorKind::ConfigError, "bad density line '" + line + "'");
    if (std::abs(lo - edges.back()) > 1e-12 * std::max(1.0, hi)) {
      throw Error(ErrorKind::ConfigError, "density cells are not contiguous");
    }
    edges.push_back(hi);
    values.push_back(v);
  }
  if (values.size() != n) throw Error(ErrorKind::ConfigError, "density file has fewer rows than declared");
  if (std::abs(edges.back() - R) > 1e-12 * R) throw Error(ErrorKind::ConfigError, "last edge differs from R");
  edges.back() = R;
  return RadialDensity(make_grid(RadialGrid(d, std::move(edges))), std::move(values));
}

inline RadialDensity read_density(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::IoError, "cannot open density file '" + path + "'");
  return read_density(is);
}

}  // namespace wcontract
