#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "wcontract/error.hpp"
#include "wcontract/interpolation.hpp"
#include "wcontract/quadrature.hpp"

namespace wcontract {

/// The diffusion nonlinearity f together with its entropy density U, tied by
/// f(r) = r U'(r) - U(r), U(0) = U'(1) = 0.
///
/// Three families are supported: the power law f(r) = r^m, the linear (heat)
/// case f(r) = r, and tabulated data interpolated by a monotone cubic.  For
/// tabulated f the entropy is recovered by quadrature of U'(r) = int_1^r f'/rho.
/// Instances are immutable and cheap to copy.
class Nonlinearity {
 public:
  enum class Kind { Power, Linear, Custom };

  static Nonlinearity power(double m) {
    if (!(m > 0) || !std::isfinite(m)) {
      throw Error(ErrorKind::InvalidParameter, "power exponent must be positive, got " + std::to_string(m));
    }
    Nonlinearity n;
    n.kind_ = Kind::Power;
    n.m_ = m;
    return n;
  }

  static Nonlinearity linear() {
    Nonlinearity n;
    n.kind_ = Kind::Linear;
    n.m_ = 1.0;
    return n;
  }

  /// Tabulated f from (r, f(r)) pairs with increasing r.  A leading (0, 0) is
  /// added when absent; the table must reach r = 1 so that U'(1) = 0 is defined.
  static Nonlinearity table(std::vector<double> r, std::vector<double> f) {
    if (r.size() != f.size() || r.empty()) {
      throw Error(ErrorKind::InvalidParameter, "table needs matching, nonempty r and f columns");
    }
    if (r.front() < 0) throw Error(ErrorKind::InvalidParameter, "table radii must be nonnegative");
    if (r.front() == 0) {
      if (f.front() != 0) throw Error(ErrorKind::InvalidParameter, "tabulated f must satisfy f(0) = 0");
    } else {
      r.insert(r.begin(), 0.0);
      f.insert(f.begin(), 0.0);
    }
    if (r.size() < 3) throw Error(ErrorKind::InvalidParameter, "table needs at least two positive samples");
    for (std::size_t i = 1; i < r.size(); ++i) {
      if (!(r[i] > r[i - 1])) throw Error(ErrorKind::InvalidParameter, "table radii must be strictly increasing");
      if (!(f[i] > f[i - 1])) throw Error(ErrorKind::InvalidParameter, "tabulated f must be strictly increasing");
    }
    if (r.back() < 1.0) {
      throw Error(ErrorKind::InvalidDomain, "table must extend to r >= 1 to normalize U'(1) = 0");
    }
    Nonlinearity n;
    n.kind_ = Kind::Custom;
    n.table_ = std::make_shared<const Table>(std::move(r), std::move(f));
    return n;
  }

  static Nonlinearity from_table_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open nonlinearity table '" + path + "'");
    std::vector<double> r, f;
    std::string line;
    while (std::getline(in, line)) {
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream ls(line);
      double a = 0, b = 0;
      if (!(ls >> a)) continue;
      if (!(ls >> b)) throw Error(ErrorKind::ConfigError, "table line needs two columns: '" + line + "'");
      r.push_back(a);
      f.push_back(b);
    }
    return table(std::move(r), std::move(f));
  }

  /// Parses "power:m=<x>", "linear" or "table:<path>".
  static Nonlinearity parse(std::string_view spec) {
    auto trim = [](std::string_view s) {
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
      while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
      return s;
    };
    spec = trim(spec);
    if (spec == "linear") return linear();
    if (spec.starts_with("power:")) {
      auto rest = trim(spec.substr(6));
      if (!rest.starts_with("m=")) throw Error(ErrorKind::ConfigError, "expected power:m=<value>");
      const std::string value(trim(rest.substr(2)));
      std::size_t used = 0;
      double m = 0;
      try {
        m = std::stod(value, &used);
      } catch (const std::exception&) {
        throw Error(ErrorKind::ConfigError, "bad power exponent '" + value + "'");
      }
      if (used != value.size()) throw Error(ErrorKind::ConfigError, "bad power exponent '" + value + "'");
      return power(m);
    }
    if (spec.starts_with("table:")) return from_table_file(std::string(trim(spec.substr(6))));
    throw Error(ErrorKind::ConfigError, "unknown nonlinearity '" + std::string(spec) + "'");
  }

  Kind kind() const { return kind_; }

  /// Power exponent for the closed-form families (1 for linear).
  std::optional<double> exponent() const {
    if (kind_ == Kind::Custom) return std::nullopt;
    return m_;
  }

  bool has_closed_form() const { return kind_ != Kind::Custom; }

  /// Largest admissible argument (the table end for tabulated f).
  double r_max() const {
    return kind_ == Kind::Custom ? table_->cubic.back() : std::numeric_limits<double>::infinity();
  }

  std::string describe() const {
    switch (kind_) {
      case Kind::Power: {
        std::ostringstream os;
        os.precision(15);
        os << "power:m=" << m_;
        return os.str();
      }
      case Kind::Linear: return "linear";
      case Kind::Custom: return "table";
    }
    return "?";
  }

  double f(double r) const {
    check_domain(r);
    if (r == 0) return 0.0;
    switch (kind_) {
      case Kind::Power: return std::pow(r, m_);
      case Kind::Linear: return r;
      case Kind::Custom: return table_->cubic(r);
    }
    return 0.0;
  }

  double fprime(double r) const {
    check_domain(r);
    switch (kind_) {
      case Kind::Power:
        if (r == 0) return m_ < 1 ? std::numeric_limits<double>::infinity() : (m_ == 1 ? 1.0 : 0.0);
        return m_ * std::pow(r, m_ - 1);
      case Kind::Linear: return 1.0;
      case Kind::Custom: return table_->cubic.derivative(r);
    }
    return 0.0;
  }

  double U(double r) const {
    check_domain(r);
    if (r == 0) return 0.0;
    switch (kind_) {
      case Kind::Power:
        if (m_ == 1) return r * std::log(r) - r;
        // (r^m - m r)/(m - 1) written to stay accurate as m -> 1.
        return r * std::expm1((m_ - 1) * std::log(r)) / (m_ - 1) - r;
      case Kind::Linear: return r * std::log(r) - r;
      case Kind::Custom: return r * Uprime(r) - f(r);
    }
    return 0.0;
  }

  double Uprime(double r) const {
    check_domain(r);
    switch (kind_) {
      case Kind::Power:
        if (r == 0) return -std::numeric_limits<double>::infinity();
        if (m_ == 1) return std::log(r);
        return m_ * std::expm1((m_ - 1) * std::log(r)) / (m_ - 1);
      case Kind::Linear: return r == 0 ? -std::numeric_limits<double>::infinity() : std::log(r);
      case Kind::Custom: return table_->uprime(r);
    }
    return 0.0;
  }

  /// U'' where a closed form exists.
  std::optional<double> Usecond(double r) const {
    if (kind_ == Kind::Custom || r <= 0) return std::nullopt;
    if (kind_ == Kind::Linear) return 1.0 / r;
    return m_ * std::pow(r, m_ - 2);
  }

 private:
  struct Table {
    Table(std::vector<double> r, std::vector<double> f) : cubic(std::move(r), std::move(f)) {
      const auto x = cubic.knots();
      anchor.assign(x.size(), 0.0);
      // anchor[k] = int_1^{x_k} f'(rho)/rho d rho for k >= 1.
      const std::size_t k1 = cubic.segment(1.0);
      const double to_left = -integrate(x[k1], 1.0, k1);
      const double to_right = integrate(1.0, x[k1 + 1], k1);
      anchor[k1 + 1] = to_right;
      if (k1 >= 1) anchor[k1] = to_left;
      for (std::size_t k = k1 + 1; k + 1 < x.size(); ++k) anchor[k + 1] = anchor[k] + integrate(x[k], x[k + 1], k);
      for (std::size_t k = k1; k >= 2; --k) anchor[k - 1] = anchor[k] - integrate(x[k - 1], x[k], k - 1);
    }

    /// int_lo^hi f'(rho)/rho inside segment k.
    double integrate(double lo, double hi, std::size_t k) const {
      if (k == 0) {
        // f is a cubic through the origin here: f'/rho = c1/rho + 2 c2 + 3 c3 rho.
        const auto x = cubic.knots();
        const auto y = cubic.values();
        const auto m = cubic.slopes();
        const double h = x[1];
        const double c1 = m[0];
        const double c2 = 3 * y[1] / (h * h) - (2 * m[0] + m[1]) / h;
        const double c3 = (m[0] + m[1]) / (h * h) - 2 * y[1] / (h * h * h);
        return c1 * std::log(hi / lo) + 2 * c2 * (hi - lo) + 1.5 * c3 * (hi * hi - lo * lo);
      }
      return quadrature::gauss([this](double rho) { return cubic.derivative(rho) / rho; }, lo, hi);
    }

    double uprime(double r) const {
      if (r == 0) return -std::numeric_limits<double>::infinity();
      const auto x = cubic.knots();
      const std::size_t k = cubic.segment(r);
      if (k == 0) return anchor[1] - integrate(r, x[1], 0);
      return anchor[k] + integrate(x[k], r, k);
    }

    MonotoneCubic cubic;
    std::vector<double> anchor;
  };

  void check_domain(double r) const {
    if (!(r >= 0)) throw Error(ErrorKind::InvalidDomain, "nonlinearity evaluated at negative density");
    if (kind_ == Kind::Custom && r > table_->cubic.back() * (1 + 1e-12)) {
      throw Error(ErrorKind::InvalidDomain, "density " + std::to_string(r) + " beyond the tabulated range");
    }
  }

  Kind kind_ = Kind::Linear;
  double m_ = 1.0;
  std::shared_ptr<const Table> table_;
};

/// Exponent threshold 1 - 1/d of the power family.
inline double power_threshold(int d) { return 1.0 - 1.0 / d; }

/// Outcome of a grid-sampled condition check.  `holds` is the final verdict:
/// the closed form when one exists, otherwise the sampled one.
struct ConditionVerdict {
  bool holds = true;
  bool sampled_holds = true;
  std::optional<bool> analytic;
  double worst_r = 0;       ///< sample with the smallest margin
  double worst_margin = 0;  ///< negative on violation
};

namespace detail {

inline void require_dimension(int d) {
  if (d < 1) throw Error(ErrorKind::InvalidParameter, "dimension must be >= 1");
}

inline void require_grid(std::span<const double> r_grid, bool increasing) {
  if (r_grid.empty()) throw Error(ErrorKind::InvalidParameter, "empty r grid");
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    if (!(r_grid[i] > 0)) throw Error(ErrorKind::InvalidParameter, "r grid must be strictly positive");
    if (increasing && i > 0 && !(r_grid[i] > r_grid[i - 1])) {
      throw Error(ErrorKind::InvalidParameter, "r grid must be strictly increasing");
    }
  }
}

inline std::optional<bool> analytic_verdict(const Nonlinearity& f, int d) {
  const auto m = f.exponent();
  if (!m) return std::nullopt;
  // Non-strict threshold; the slack absorbs the rounding of 1 - 1/d itself.
  return *m * d >= (d - 1) * (1 - 1e-14);
}

inline ConditionVerdict finish(ConditionVerdict v, const Nonlinearity& f, int d) {
  v.analytic = analytic_verdict(f, d);
  v.holds = v.analytic ? *v.analytic : v.sampled_holds;
  return v;
}

}  // namespace detail

/// Checks (d-1) f(r) <= d r f'(r) on the sampled radii.
inline ConditionVerdict mccann_holds(const Nonlinearity& f, int d, std::span<const double> r_grid) {
  detail::require_dimension(d);
  detail::require_grid(r_grid, false);
  ConditionVerdict v;
  v.worst_margin = std::numeric_limits<double>::infinity();
  for (double r : r_grid) {
    const double fr = f.f(r);
    const double margin = d * r * f.fprime(r) - (d - 1) * fr;
    if (margin < -1e-10 * std::max(1.0, fr)) v.sampled_holds = false;
    if (margin < v.worst_margin) {
      v.worst_margin = margin;
      v.worst_r = r;
    }
  }
  return detail::finish(v, f, d);
}

/// Checks that r -> r^{-1+1/d} f(r) is nondecreasing across consecutive samples.
inline ConditionVerdict condition3_monotone(const Nonlinearity& f, int d, std::span<const double> r_grid) {
  detail::require_dimension(d);
  detail::require_grid(r_grid, true);
  auto g = [&](double r) { return std::pow(r, -1.0 + 1.0 / d) * f.f(r); };
  ConditionVerdict v;
  v.worst_margin = std::numeric_limits<double>::infinity();
  double prev = g(r_grid[0]);
  for (std::size_t i = 1; i < r_grid.size(); ++i) {
    const double cur = g(r_grid[i]);
    const double margin = cur - prev;
    if (margin < -1e-10 * std::max({1.0, std::abs(prev), std::abs(cur)})) v.sampled_holds = false;
    if (margin < v.worst_margin) {
      v.worst_margin = margin;
      v.worst_r = r_grid[i];
    }
    prev = cur;
  }
  if (r_grid.size() == 1) v.worst_margin = 0;
  return detail::finish(v, f, d);
}

/// psi(r) = r^d U(r^{-d}).
inline double psi_entropy(const Nonlinearity& f, int d, double r) {
  const double s = std::pow(r, -d);
  return std::pow(r, d) * f.U(s);
}

/// Discrete convexity of psi(r) = r^d U(r^{-d}): consecutive chord slopes must
/// be nondecreasing.  The margin reported is the smallest slope increment.
inline ConditionVerdict psi_entropy_convexity(const Nonlinearity& f, int d, std::span<const double> r_grid) {
  detail::require_dimension(d);
  detail::require_grid(r_grid, true);
  if (r_grid.size() < 3) throw Error(ErrorKind::InvalidParameter, "convexity check needs three or more radii");
  std::vector<double> psi(r_grid.size());
  for (std::size_t i = 0; i < r_grid.size(); ++i) {
    const double s = std::pow(r_grid[i], -d);
    if (s > f.r_max() || !std::isfinite(s)) {
      throw Error(ErrorKind::InvalidDomain, "U undefined at r^{-d} = " + std::to_string(s));
    }
    psi[i] = psi_entropy(f, d, r_grid[i]);
  }
  ConditionVerdict v;
  v.worst_margin = std::numeric_limits<double>::infinity();
  double prev_slope = (psi[1] - psi[0]) / (r_grid[1] - r_grid[0]);
  for (std::size_t i = 2; i < r_grid.size(); ++i) {
    const double slope = (psi[i] - psi[i - 1]) / (r_grid[i] - r_grid[i - 1]);
    const double margin = slope - prev_slope;
    // Rounding in psi is amplified by the chord length; scale accordingly.
    const double scale = std::max({std::abs(slope), std::abs(prev_slope),
                                   (std::abs(psi[i]) + std::abs(psi[i - 1])) / (r_grid[i] - r_grid[i - 1])});
    if (margin < -1e-8 * scale) v.sampled_holds = false;
    if (margin < v.worst_margin) {
      v.worst_margin = margin;
      v.worst_r = r_grid[i - 1];
    }
    prev_slope = slope;
  }
  return detail::finish(v, f, d);
}

struct BracketValue {
  double value = 0;          ///< p^d f(r p^{-d}) (S - 1) + f(r) (s - 1)
  double reduced_bound = 0;  ///< (p - 1)(f(r) - p^{d-1} f(r p^{-d})), a lower bound for value
};

/// Pointwise integrand of the dissipation estimate.  Requires s >= p and
/// S >= 1/p, the constraints imposed by the eigenvalues of a positive Hessian.
inline BracketValue bracket_inequality(const Nonlinearity& f, int d, double r, double p, double s, double S) {
  detail::require_dimension(d);
  if (!(r > 0) || !(p > 0)) throw Error(ErrorKind::InvalidParameter, "bracket needs r > 0 and p > 0");
  const double slack = 1e-12;
  if (s < p * (1 - slack) || S < (1 / p) * (1 - slack)) {
    throw Error(ErrorKind::InvalidParameter, "bracket needs s >= p and S >= 1/p");
  }
  const double pd = std::pow(p, d);
  const double fr = f.f(r);
  const double fs = f.f(r / pd);
  return {pd * fs * (S - 1) + fr * (s - 1), (p - 1) * (fr - pd / p * fs)};
}

/// n log-spaced radii on [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0) || !(hi > lo) || n < 2) throw Error(ErrorKind::InvalidParameter, "bad log grid");
  std::vector<double> r(n);
  const double step = std::log(hi / lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) r[i] = lo * std::exp(step * static_cast<double>(i));
  r.back() = hi;
  return r;
}

}  // namespace wcontract
