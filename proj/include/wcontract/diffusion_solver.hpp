#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "wcontract/error.hpp"
#include "wcontract/interpolation.hpp"
#include "wcontract/nonlinearity.hpp"
#include "wcontract/radial_measure.hpp"

namespace wcontract {

enum class Scheme { Explicit, Implicit };

struct SolverConfig {
  Scheme scheme = Scheme::Implicit;
  /// Fixed step.  When unset: CFL-adaptive for the explicit scheme, the
  /// smallest cell width for the implicit one.
  std::optional<double> dt;
  double safety = 0.9;
  double t_end = 0;
  std::vector<double> snapshots;
  /// Lower bound required of the data; must be positive for fast diffusion.
  double floor = 0;
  double newton_tol = 1e-12;
  int newton_max_iter = 60;
  int max_retries = 12;

  void validate() const {
    if (!(t_end >= 0)) throw Error(ErrorKind::InvalidParameter, "t_end must be >= 0");
    if (!(safety > 0 && safety <= 1)) throw Error(ErrorKind::InvalidParameter, "safety factor must lie in (0, 1]");
    if (dt && !(*dt > 0)) throw Error(ErrorKind::InvalidParameter, "dt must be positive");
    if (!(floor >= 0)) throw Error(ErrorKind::InvalidParameter, "floor must be >= 0");
    if (!(newton_tol > 0) || newton_max_iter < 1) throw Error(ErrorKind::InvalidParameter, "bad Newton settings");
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
      if (snapshots[i] < 0 || snapshots[i] > t_end * (1 + 1e-14)) {
        throw Error(ErrorKind::InvalidParameter, "snapshot times must lie in [0, t_end]");
      }
      if (i > 0 && snapshots[i] < snapshots[i - 1]) throw Error(ErrorKind::InvalidParameter, "snapshots must be sorted");
    }
  }
};

struct StepDiagnostics {
  double dt = 0;
  int newton_iterations = 0;
  int retries = 0;
  double min = 0;
  double max = 0;
};

struct SolverState {
  double t = 0;
  RadialDensity u;
  StepDiagnostics diag{};
};

/// Radial finite-volume discretization of u_t = Laplacian f(u) on B_R with
/// zero flux at the origin (symmetry) and at |x| = R (Neumann):
///   V_i du_i/dt = T_{i+1/2} (f_{i+1} - f_i) - T_{i-1/2} (f_i - f_{i-1}),
///   T_{i+1/2} = sigma r_{i+1}^{d-1} / (c_{i+1} - c_i).
/// Face fluxes are shared by neighbouring cells, so mass changes only by
/// rounding.
class DiffusionSolver {
 public:
  DiffusionSolver(GridPtr grid, Nonlinearity f, SolverConfig cfg)
      : grid_(std::move(grid)), f_(std::move(f)), cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto& g = *grid_;
    const std::size_t n = g.cells();
    trans_.assign(n + 1, 0.0);
    for (std::size_t i = 1; i < n; ++i) {
      trans_[i] = g.surface_factor() * std::pow(g.edge(i), g.dim() - 1) / (g.center(i) - g.center(i - 1));
    }
    fast_ = !std::isfinite(f_.fprime(0.0));
  }

  const RadialGrid& grid() const { return *grid_; }
  const Nonlinearity& nonlinearity() const { return f_; }
  const SolverConfig& config() const { return cfg_; }

  /// Largest explicit step keeping the update monotone (hence positive and
  /// within the initial bounds).
  double stable_dt(const RadialDensity& u) const {
    double fp_max = 0;
    for (double v : u.values()) fp_max = std::max(fp_max, f_.fprime(v));
    if (fp_max <= 0) return std::numeric_limits<double>::infinity();
    double dt = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid_->cells(); ++i) {
      const double t = trans_[i] + trans_[i + 1];
      if (t > 0) dt = std::min(dt, grid_->volume(i) / (t * fp_max));
    }
    return dt;
  }

  /// Default step for the configured scheme at state u.
  double default_dt(const RadialDensity& u) const {
    if (cfg_.dt) return *cfg_.dt;
    if (cfg_.scheme == Scheme::Explicit) return cfg_.safety * stable_dt(u);
    double h = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid_->cells(); ++i) h = std::min(h, grid_->width(i));
    return h;
  }

  void check_data(const RadialDensity& u) const {
    if (!(u.grid() == *grid_)) throw Error(ErrorKind::InvalidParameter, "density lives on a different grid");
    const double lo = u.min();
    if (fast_ && !(lo > 0)) {
      throw Error(ErrorKind::InvalidParameter, "fast diffusion needs strictly positive data");
    }
    if (cfg_.floor > 0 && lo < cfg_.floor * (1 - 1e-12)) {
      throw Error(ErrorKind::InvalidParameter, "data fall below the configured floor");
    }
  }

  /// One step of the configured scheme with the default step size.
  SolverState step(const SolverState& s) const {
    const double dt = std::min(default_dt(s.u), std::numeric_limits<double>::max());
    return advance(s, dt);
  }

  /// Advances exactly by dt, splitting into halved substeps when Newton fails
  /// (implicit) or the step exceeds the stability bound (explicit, adaptive).
  SolverState advance(const SolverState& s, double dt) const {
    if (!(dt > 0)) throw Error(ErrorKind::InvalidParameter, "step size must be positive");
    SolverState cur = s;
    double remaining = dt;
    int retries = 0;
    int iterations = 0;
    double h = dt;
    if (cfg_.scheme == Scheme::Explicit && !cfg_.dt) h = std::min(h, cfg_.safety * stable_dt(cur.u));
    while (remaining > 0) {
      h = std::min(h, remaining);
      std::optional<std::vector<double>> next;
      int its = 0;
      if (cfg_.scheme == Scheme::Explicit) {
        next = explicit_update(cur.u, h);
        if (!next) {
          if (cfg_.dt) throw Error(ErrorKind::CflViolation, "explicit step produced a negative density");
          if (++retries > cfg_.max_retries) throw Error(ErrorKind::CflViolation, "explicit step keeps failing");
          h *= 0.5;
          continue;
        }
      } else {
        next = implicit_update(cur.u, h, its);
        iterations += its;
        if (!next) {
          if (++retries > cfg_.max_retries) throw Error(ErrorKind::StepFailure, "Newton failed after dt halving");
          h *= 0.5;
          continue;
        }
      }
      cur.u = RadialDensity(grid_, std::move(*next));
      remaining -= h;
      if (remaining <= 1e-13 * dt) remaining = 0;
      cur.t = remaining == 0 ? s.t + dt : cur.t + h;
      if (cfg_.scheme == Scheme::Explicit && !cfg_.dt) h = cfg_.safety * stable_dt(cur.u);
    }
    cur.diag = {dt, iterations, retries, cur.u.min(), cur.u.max()};
    return cur;
  }

  struct Snapshot {
    double t = 0;
    RadialDensity u;
    StepDiagnostics diag{};
  };

  /// Runs to t_end, landing exactly on every requested snapshot time.  The
  /// initial state is always the first snapshot.  `observer` (optional) sees
  /// every accepted step.
  std::vector<Snapshot> evolve(const RadialDensity& u0,
                               const std::function<void(const SolverState&)>& observer = {}) const {
    check_data(u0);
    std::vector<Snapshot> out;
    SolverState state{0.0, u0, {0, 0, 0, u0.min(), u0.max()}};
    out.push_back({0.0, u0, state.diag});
    if (observer) observer(state);
    std::vector<double> targets;
    for (double t : cfg_.snapshots) {
      if (t > 0) targets.push_back(t);
    }
    if (cfg_.t_end > 0 && (targets.empty() || targets.back() < cfg_.t_end)) targets.push_back(cfg_.t_end);
    for (double target : targets) {
      while (state.t < target) {
        double dt = default_dt(state.u);
        const double left = target - state.t;
        if (dt >= left * (1 - 1e-12)) dt = left;
        state = advance(state, dt);
        if (std::abs(state.t - target) <= 1e-13 * std::max(1.0, target)) state.t = target;
        if (observer) observer(state);
      }
      if (out.back().t != target) out.push_back({target, state.u, state.diag});
    }
    return out;
  }

  /// Net rate V_i du_i/dt for densities u (face fluxes telescoped).
  std::vector<double> divergence(std::span<const double> fu) const {
    const std::size_t n = fu.size();
    std::vector<double> div(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double flux = trans_[i + 1] * (fu[i + 1] - fu[i]);
      div[i] += flux;
      div[i + 1] -= flux;
    }
    return div;
  }

  std::span<const double> transmissibilities() const { return trans_; }

 private:
  std::vector<double> eval_f(std::span<const double> u) const {
    std::vector<double> fu(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) fu[i] = f_.f(u[i]);
    return fu;
  }

  std::optional<std::vector<double>> explicit_update(const RadialDensity& u, double dt) const {
    const auto fu = eval_f(u.values());
    const auto div = divergence(fu);
    std::vector<double> next(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      next[i] = u[i] + dt * div[i] / grid_->volume(i);
      if (!(next[i] >= 0) || (fast_ && !(next[i] > 0))) return std::nullopt;
    }
    return next;
  }

  /// Backward Euler by damped Newton on the tridiagonal system; the accepted
  /// state is rebuilt from the converged fluxes so that mass is conserved to
  /// rounding regardless of the Newton tolerance.
  std::optional<std::vector<double>> implicit_update(const RadialDensity& un, double dt, int& iterations) const {
    const std::size_t n = un.size();
    const auto& V = grid_->volumes();
    std::vector<double> u(un.values().begin(), un.values().end());
    std::vector<double> fu(n), fp(n), G(n), a(n), b(n), c(n), delta(n);
    const double scale = std::max(un.max(), std::numeric_limits<double>::min());
    bool converged = false;
    for (iterations = 1; iterations <= cfg_.newton_max_iter; ++iterations) {
      for (std::size_t i = 0; i < n; ++i) {
        fu[i] = f_.f(u[i]);
        fp[i] = f_.fprime(u[i]);
        if (!std::isfinite(fp[i])) return std::nullopt;
      }
      const auto div = divergence(fu);
      for (std::size_t i = 0; i < n; ++i) {
        G[i] = V[i] * (u[i] - un[i]) - dt * div[i];
        const double tl = trans_[i], tr = trans_[i + 1];
        b[i] = V[i] + dt * (tl + tr) * fp[i];
        a[i] = i > 0 ? -dt * tl * fp[i - 1] : 0.0;
        c[i] = i + 1 < n ? -dt * tr * fp[i + 1] : 0.0;
        delta[i] = -G[i];
      }
      if (!solve_tridiagonal(a, b, c, delta)) return std::nullopt;
      double alpha = 1.0;
      if (fast_) {
        for (std::size_t i = 0; i < n; ++i) {
          if (delta[i] < 0) alpha = std::min(alpha, 0.9 * u[i] / -delta[i]);
        }
      }
      double step_norm = 0;
      for (std::size_t i = 0; i < n; ++i) {
        u[i] += alpha * delta[i];
        if (!fast_ && u[i] < 0) u[i] = 0;
        if (!std::isfinite(u[i])) return std::nullopt;
        step_norm = std::max(step_norm, std::abs(alpha * delta[i]));
      }
      if (alpha == 1.0 && step_norm <= cfg_.newton_tol * scale) {
        converged = true;
        break;
      }
    }
    if (!converged) return std::nullopt;
    for (std::size_t i = 0; i < n; ++i) fu[i] = f_.f(u[i]);
    const auto div = divergence(fu);
    std::vector<double> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = un[i] + dt * div[i] / V[i];
      if (next[i] < 0 && next[i] > -1e-13 * scale && !fast_) next[i] = 0;
      if (!(next[i] >= 0) || (fast_ && !(next[i] > 0))) return std::nullopt;
    }
    return next;
  }

  /// Thomas algorithm; a = sub-, b = main, c = super-diagonal; rhs overwritten.
  static bool solve_tridiagonal(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c,
                                std::vector<double>& rhs) {
    const std::size_t n = b.size();
    for (std::size_t i = 1; i < n; ++i) {
      if (b[i - 1] == 0) return false;
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    if (b[n - 1] == 0) return false;
    rhs[n - 1] /= b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - c[i] * rhs[i + 1]) / b[i];
    return true;
  }

  GridPtr grid_;
  Nonlinearity f_;
  SolverConfig cfg_;
  std::vector<double> trans_;  ///< face transmissibilities, zero at r = 0 and r = R
  bool fast_ = false;
};

/// One solver step with the configured scheme.
inline SolverState step(const SolverState& state, const Nonlinearity& f, const SolverConfig& cfg) {
  DiffusionSolver solver(state.u.grid_ptr(), f, cfg);
  solver.check_data(state.u);
  return solver.step(state);
}

inline std::vector<DiffusionSolver::Snapshot> evolve(const RadialDensity& u0, const Nonlinearity& f,
                                                     const SolverConfig& cfg) {
  return DiffusionSolver(u0.grid_ptr(), f, cfg).evolve(u0);
}

/// Radial component of xi[u] = -grad(f(u))/u sampled at r = 0 (where it
/// vanishes), at every cell centre, and at r = R; evaluated in between by a
/// monotone cubic.
class RadialVelocityField {
 public:
  RadialVelocityField(std::vector<double> nodes, std::vector<double> values)
      : interp_(nodes, values), nodes_(std::move(nodes)), values_(std::move(values)) {}

  double operator()(double rho) const { return interp_(rho); }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> values() const { return values_; }

 private:
  MonotoneCubic interp_;
  std::vector<double> nodes_;
  std::vector<double> values_;
};

inline RadialVelocityField velocity_field(const RadialDensity& u, const Nonlinearity& f) {
  const auto& g = u.grid();
  const std::size_t n = g.cells();
  if (n < 2) throw Error(ErrorKind::InvalidParameter, "velocity field needs two or more cells");
  for (double v : u.values()) {
    if (!(v > 0)) throw Error(ErrorKind::DivisionGuard, "velocity field of a density touching zero");
  }
  std::vector<double> fu(n);
  for (std::size_t i = 0; i < n; ++i) fu[i] = f.f(u[i]);
  std::vector<double> nodes(n + 2), xi(n + 2);
  nodes[0] = 0;
  xi[0] = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double grad = 0;
    if (i == 0) {
      // mirror cell at -c_0 carries the same value
      grad = (fu[1] - fu[0]) / (g.center(1) + g.center(0));
    } else if (i + 1 == n) {
      grad = (fu[i] - fu[i - 1]) / (g.center(i) - g.center(i - 1));
    } else {
      grad = (fu[i + 1] - fu[i - 1]) / (g.center(i + 1) - g.center(i - 1));
    }
    nodes[i + 1] = g.center(i);
    xi[i + 1] = -grad / u[i];
  }
  nodes[n + 1] = g.radius();
  xi[n + 1] = xi[n];
  return RadialVelocityField(std::move(nodes), std::move(xi));
}

}  // namespace wcontract
