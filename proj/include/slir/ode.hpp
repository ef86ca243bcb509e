#ifndef SLIR_ODE_HPP
#define SLIR_ODE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace slir::ode {

/// Thrown when a step produces a non-finite state or the step budget runs out.
class IntegrationError : public std::runtime_error {
public:
  IntegrationError(const std::string& what, double time)
      : std::runtime_error(what + " at t=" + std::to_string(time)),
        time_(time) {}

  double time() const noexcept { return time_; }

private:
  double time_;
};

/// Thrown for invalid tableaux, step sizes, tolerances or time grids.
class ConfigurationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/**
 * Coefficients of an explicit Runge-Kutta scheme with `s` stages.
 *
 * Stage i evaluates the right-hand side at `t + dt * nodes(i)` and at the
 * state `x + dt * sum_{j<i} coupling(i, j) * k_j`; the update is
 * `x + dt * sum_i weights(i) * k_i`.
 */
template <typename Scalar>
struct ButcherTableau {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector weights;
  Vector nodes;
  Matrix coupling;

  Eigen::Index stages() const noexcept { return weights.size(); }

  /// Throws ConfigurationError unless the tableau is consistent:
  /// sizes agree, coupling is strictly lower triangular, the weights sum to
  /// one, each row of the coupling sums to its node and the first node is 0.
  void validate(Scalar tol = Scalar(1e-12)) const {
    const Eigen::Index s = stages();
    if (s < 1) throw ConfigurationError("tableau needs at least one stage");
    if (nodes.size() != s || coupling.rows() != s || coupling.cols() != s)
      throw ConfigurationError("tableau dimensions disagree");
    if (!weights.allFinite() || !nodes.allFinite() || !coupling.allFinite())
      throw ConfigurationError("tableau has non-finite coefficients");
    for (Eigen::Index i = 0; i < s; ++i)
      for (Eigen::Index j = i; j < s; ++j)
        if (coupling(i, j) != Scalar(0))
          throw ConfigurationError("tableau coupling must be strictly lower triangular");
    using std::abs;
    if (abs(weights.sum() - Scalar(1)) > tol)
      throw ConfigurationError("tableau weights must sum to one");
    if (abs(nodes(0)) > tol)
      throw ConfigurationError("tableau first node must be zero");
    for (Eigen::Index i = 1; i < s; ++i)
      if (abs(coupling.row(i).sum() - nodes(i)) > tol)
        throw ConfigurationError("tableau row " + std::to_string(i + 1) +
                                 " coupling does not sum to its node");
  }

  static ButcherTableau euler() {
    ButcherTableau t;
    t.weights = Vector::Ones(1);
    t.nodes = Vector::Zero(1);
    t.coupling = Matrix::Zero(1, 1);
    return t;
  }

  /// Two-stage scheme with equal weights and a full Euler predictor.
  /// Reproduces the trapezoidal update.
  static ButcherTableau rk2() {
    ButcherTableau t;
    t.weights = Vector::Constant(2, Scalar(0.5));
    t.nodes = Vector::Zero(2);
    t.nodes(1) = Scalar(1);
    t.coupling = Matrix::Zero(2, 2);
    t.coupling(1, 0) = Scalar(1);
    return t;
  }

  static ButcherTableau midpoint() {
    ButcherTableau t;
    t.weights = Vector::Zero(2);
    t.weights(1) = Scalar(1);
    t.nodes = Vector::Zero(2);
    t.nodes(1) = Scalar(0.5);
    t.coupling = Matrix::Zero(2, 2);
    t.coupling(1, 0) = Scalar(0.5);
    return t;
  }

  static ButcherTableau rk4() {
    ButcherTableau t;
    t.weights.resize(4);
    t.weights << Scalar(1), Scalar(2), Scalar(2), Scalar(1);
    t.weights /= Scalar(6);
    t.nodes.resize(4);
    t.nodes << Scalar(0), Scalar(0.5), Scalar(0.5), Scalar(1);
    t.coupling = Matrix::Zero(4, 4);
    t.coupling(1, 0) = Scalar(0.5);
    t.coupling(2, 1) = Scalar(0.5);
    t.coupling(3, 2) = Scalar(1);
    return t;
  }
};

enum class Method { Euler, Trapezoidal, ModifiedEuler, RK2, RK4, GeneralRK, Adaptive45 };

inline const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::Euler: return "euler";
    case Method::Trapezoidal: return "trapezoidal";
    case Method::ModifiedEuler: return "modified_euler";
    case Method::RK2: return "rk2";
    case Method::RK4: return "rk4";
    case Method::GeneralRK: return "general_rk";
    case Method::Adaptive45: return "adaptive45";
  }
  return "unknown";
}

/// Parses the names produced by to_string(Method).
inline Method parse_method(const std::string& name) {
  for (Method m : {Method::Euler, Method::Trapezoidal, Method::ModifiedEuler, Method::RK2,
                   Method::RK4, Method::GeneralRK, Method::Adaptive45})
    if (name == to_string(m)) return m;
  throw ConfigurationError("unknown ODE method '" + name + "'");
}

struct SolverConfig {
  Method method = Method::Adaptive45;
  double dt = 0.01;
  double rel_tol = 1e-6;
  double abs_tol = 1e-6;
  long max_steps = 100000;
  /// Required when method == GeneralRK.
  std::optional<ButcherTableau<double>> tableau;

  void validate() const {
    if (!(dt > 0) || !std::isfinite(dt)) throw ConfigurationError("dt must be positive");
    if (!(rel_tol > 0) || !(abs_tol > 0)) throw ConfigurationError("tolerances must be positive");
    if (max_steps < 1) throw ConfigurationError("max_steps must be positive");
    if (method == Method::GeneralRK) {
      if (!tableau) throw ConfigurationError("general_rk requires a tableau");
      tableau->validate();
    }
  }

  static SolverConfig fixed(Method method, double dt) {
    SolverConfig c;
    c.method = method;
    c.dt = dt;
    return c;
  }

  static SolverConfig adaptive(double rel_tol, double abs_tol, long max_steps = 100000) {
    SolverConfig c;
    c.method = Method::Adaptive45;
    c.rel_tol = rel_tol;
    c.abs_tol = abs_tol;
    c.max_steps = max_steps;
    return c;
  }
};

struct IntegrationStats {
  long accepted = 0;
  long rejected = 0;
  long rhs_evaluations = 0;
};

/// States at each requested output time. `states[k]` belongs to `times[k]`.
template <typename Vector>
struct Trajectory {
  std::vector<double> times;
  std::vector<Vector> states;
  IntegrationStats stats;

  std::size_t size() const noexcept { return states.size(); }
  const Vector& operator[](std::size_t k) const { return states[k]; }
  const Vector& back() const { return states.back(); }
};

namespace detail {

template <typename Vector>
void require_finite(const Vector& v, double t, const char* what) {
  if (!v.allFinite()) throw IntegrationError(std::string("non-finite ") + what, t);
}

template <typename Vector, typename Rhs>
Vector eval(const Rhs& rhs, const Vector& x, double t) {
  Vector dx = rhs(x, t);
  if (dx.size() != x.size()) throw ConfigurationError("rhs changed the state dimension");
  require_finite(dx, t, "right-hand side");
  return dx;
}

}  // namespace detail

template <typename Vector, typename Rhs>
Vector step_euler(const Rhs& rhs, const Vector& x, double t, double dt) {
  if (!(dt > 0)) throw ConfigurationError("dt must be positive");
  Vector out = x + dt * detail::eval(rhs, x, t);
  detail::require_finite(out, t + dt, "state");
  return out;
}

template <typename Vector, typename Rhs>
Vector step_trapezoidal(const Rhs& rhs, const Vector& x, double t, double dt) {
  if (!(dt > 0)) throw ConfigurationError("dt must be positive");
  const Vector a = detail::eval(rhs, x, t);
  const Vector predictor = x + dt * a;
  const Vector b = detail::eval(rhs, predictor, t + dt);
  Vector out = x + dt * ((a + b) / 2.0);
  detail::require_finite(out, t + dt, "state");
  return out;
}

template <typename Vector, typename Rhs>
Vector step_modified_euler(const Rhs& rhs, const Vector& x, double t, double dt) {
  if (!(dt > 0)) throw ConfigurationError("dt must be positive");
  const Vector a = detail::eval(rhs, x, t);
  const Vector half = x + (dt / 2.0) * a;
  const Vector c = detail::eval(rhs, half, t + dt / 2.0);
  Vector out = x + dt * c;
  detail::require_finite(out, t + dt, "state");
  return out;
}

/// One step of an arbitrary explicit scheme. The tableau is validated on
/// every call; hot loops should go through integrate(), which validates once.
template <typename Vector, typename Rhs>
Vector step_general_rk(const ButcherTableau<double>& tableau, const Rhs& rhs, const Vector& x,
                       double t, double dt) {
  tableau.validate();
  if (!(dt > 0)) throw ConfigurationError("dt must be positive");
  const Eigen::Index s = tableau.stages();
  std::vector<Vector> k;
  k.reserve(static_cast<std::size_t>(s));
  for (Eigen::Index i = 0; i < s; ++i) {
    Vector stage = x;
    for (Eigen::Index j = 0; j < i; ++j)
      if (tableau.coupling(i, j) != 0.0)
        stage += (dt * tableau.coupling(i, j)) * k[static_cast<std::size_t>(j)];
    k.push_back(detail::eval(rhs, stage, t + dt * tableau.nodes(i)));
  }
  Vector incr = tableau.weights(0) * k[0];
  for (Eigen::Index i = 1; i < s; ++i) incr += tableau.weights(i) * k[static_cast<std::size_t>(i)];
  Vector out = x + dt * incr;
  detail::require_finite(out, t + dt, "state");
  return out;
}

template <typename Vector, typename Rhs>
Vector step_rk4(const Rhs& rhs, const Vector& x, double t, double dt) {
  if (!(dt > 0)) throw ConfigurationError("dt must be positive");
  const double h2 = dt / 2.0;
  const Vector k1 = detail::eval(rhs, x, t);
  const Vector k2 = detail::eval(rhs, Vector(x + h2 * k1), t + h2);
  const Vector k3 = detail::eval(rhs, Vector(x + h2 * k2), t + h2);
  const Vector k4 = detail::eval(rhs, Vector(x + dt * k3), t + dt);
  Vector out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  detail::require_finite(out, t + dt, "state");
  return out;
}

namespace detail {

inline void require_increasing(const std::vector<double>& times) {
  if (times.empty()) throw ConfigurationError("time grid is empty");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!std::isfinite(times[k])) throw ConfigurationError("time grid has non-finite entries");
    if (k > 0 && !(times[k] > times[k - 1]))
      throw ConfigurationError("time grid must be strictly increasing");
  }
}

// Dormand-Prince 5(4) coefficients.
struct DormandPrince {
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  // b - b_hat for the error estimate.
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

template <typename Vector>
double error_norm(const Vector& err, const Vector& x, const Vector& x_new, double rel_tol,
                  double abs_tol) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double scale = abs_tol + rel_tol * std::max(std::abs(x(i)), std::abs(x_new(i)));
    worst = std::max(worst, std::abs(err(i)) / scale);
  }
  return worst;
}

}  // namespace detail

/**
 * Fixed-step integration over a strictly increasing output grid.
 *
 * Each interval [times[k], times[k+1]] is split into the smallest number of
 * equal steps no longer than `config.dt`, so every output time is hit exactly.
 * Adaptive45 is forwarded to integrate_adaptive().
 */
template <typename Vector, typename Rhs>
Trajectory<Vector> integrate(const Rhs& rhs, const Vector& x0, const std::vector<double>& times,
                             const SolverConfig& config);

/**
 * Embedded Dormand-Prince 4(5) integration with error control.
 *
 * A step is accepted when every component satisfies
 * |err_i| <= abs_tol + rel_tol * max(|x_i|, |x_new_i|). Step sizes follow the
 * usual controller with safety factor 0.9 and per-step change clamped to
 * [0.2, 5]. Steps are truncated so they land on every output time. Output
 * times must lie inside [t_span.first, t_span.second].
 */
template <typename Vector, typename Rhs>
Trajectory<Vector> integrate_adaptive(const Rhs& rhs, const Vector& x0,
                                      std::pair<double, double> t_span,
                                      const std::vector<double>& output_times, double rel_tol,
                                      double abs_tol, long max_steps) {
  using DP = detail::DormandPrince;
  if (!(rel_tol > 0) || !(abs_tol > 0)) throw ConfigurationError("tolerances must be positive");
  if (max_steps < 1) throw ConfigurationError("max_steps must be positive");
  const auto [t0, t1] = t_span;
  if (!(t1 >= t0)) throw ConfigurationError("t_span must be ordered");
  detail::require_increasing(output_times);
  if (output_times.front() < t0 || output_times.back() > t1)
    throw ConfigurationError("output times must lie inside t_span");
  detail::require_finite(x0, t0, "initial state");

  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 5.0;

  Trajectory<Vector> out;
  out.times = output_times;
  out.states.reserve(output_times.size());

  Vector x = x0;
  double t = t0;
  std::size_t next_out = 0;
  while (next_out < output_times.size() && output_times[next_out] <= t0) {
    out.states.push_back(x);
    ++next_out;
  }
  if (next_out == output_times.size()) return out;

  const double t_end = output_times.back();
  Vector k1 = detail::eval(rhs, x, t);
  out.stats.rhs_evaluations = 1;

  // Starting step: the usual two-probe estimate, except a vanishing vector
  // field takes the whole span at once.
  double h;
  {
    Vector scale = (abs_tol + rel_tol * x.array().abs()).matrix();
    const double d0 = (x.array() / scale.array()).matrix().norm() / std::sqrt(double(x.size()));
    const double d1 = (k1.array() / scale.array()).matrix().norm() / std::sqrt(double(x.size()));
    const double span = t_end - t;
    if (d1 == 0.0) {
      h = span;
    } else {
      double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
      h0 = std::min(h0, span);
      const Vector x1 = x + h0 * k1;
      const Vector k_probe = detail::eval(rhs, x1, t + h0);
      ++out.stats.rhs_evaluations;
      const double d2 = ((k_probe - k1).array() / scale.array()).matrix().norm() /
                        std::sqrt(double(x.size())) / h0;
      const double big = std::max(d1, d2);
      const double h1 = big <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / big, 1.0 / 5.0);
      h = std::min(100 * h0, h1);
    }
  }

  long attempts = 0;
  while (next_out < output_times.size()) {
    if (++attempts > max_steps)
      throw IntegrationError("adaptive solver exceeded max_steps (stiff or unstable system)", t);
    const double target = output_times[next_out];
    bool lands = false;
    double step = h;
    if (t + step >= target || target - (t + step) <= 1e-12 * std::max(1.0, std::abs(target))) {
      step = target - t;
      lands = true;
    }
    if (!(step > 0) || t + step == t)
      throw IntegrationError("adaptive step size underflow", t);

    const Vector k2 = rhs(Vector(x + step * (DP::a21 * k1)), t + DP::c2 * step);
    const Vector k3 = rhs(Vector(x + step * (DP::a31 * k1 + DP::a32 * k2)), t + DP::c3 * step);
    const Vector k4 =
        rhs(Vector(x + step * (DP::a41 * k1 + DP::a42 * k2 + DP::a43 * k3)), t + DP::c4 * step);
    const Vector k5 = rhs(
        Vector(x + step * (DP::a51 * k1 + DP::a52 * k2 + DP::a53 * k3 + DP::a54 * k4)),
        t + DP::c5 * step);
    const Vector k6 = rhs(Vector(x + step * (DP::a61 * k1 + DP::a62 * k2 + DP::a63 * k3 +
                                             DP::a64 * k4 + DP::a65 * k5)),
                          t + step);
    const Vector x_new =
        x + step * (DP::b1 * k1 + DP::b3 * k3 + DP::b4 * k4 + DP::b5 * k5 + DP::b6 * k6);
    const Vector k7 = rhs(x_new, t + step);
    out.stats.rhs_evaluations += 6;

    const Vector err = step * (DP::e1 * k1 + DP::e3 * k3 + DP::e4 * k4 + DP::e5 * k5 +
                               DP::e6 * k6 + DP::e7 * k7);
    double norm = detail::error_norm(err, x, x_new, rel_tol, abs_tol);
    if (!std::isfinite(norm) || !x_new.allFinite() || !k7.allFinite()) norm = 1e10;

    if (norm <= 1.0) {
      t = lands ? target : t + step;
      x = x_new;
      k1 = k7;
      ++out.stats.accepted;
      if (lands) {
        out.states.push_back(x);
        ++next_out;
      }
      const double factor =
          norm == 0.0 ? max_factor
                      : std::clamp(safety * std::pow(norm, -1.0 / 5.0), min_factor, max_factor);
      // A step truncated to land on an output time does not shrink the proposal.
      h = (lands && step < h) ? std::max(h, step * factor) : step * factor;
    } else {
      ++out.stats.rejected;
      h = step * std::clamp(safety * std::pow(norm, -1.0 / 5.0), min_factor, 1.0);
    }
  }
  return out;
}

template <typename Vector, typename Rhs>
Trajectory<Vector> integrate(const Rhs& rhs, const Vector& x0, const std::vector<double>& times,
                             const SolverConfig& config) {
  config.validate();
  detail::require_increasing(times);
  if (config.method == Method::Adaptive45)
    return integrate_adaptive(rhs, x0, {times.front(), times.back()}, times, config.rel_tol,
                              config.abs_tol, config.max_steps);
  detail::require_finite(x0, times.front(), "initial state");

  const ButcherTableau<double>* tableau = nullptr;
  ButcherTableau<double> rk2;
  if (config.method == Method::RK2) {
    rk2 = ButcherTableau<double>::rk2();
    tableau = &rk2;
  } else if (config.method == Method::GeneralRK) {
    tableau = &*config.tableau;
  }

  Trajectory<Vector> out;
  out.times = times;
  out.states.reserve(times.size());
  out.states.push_back(x0);

  Vector x = x0;
  long steps = 0;
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const double span = times[k + 1] - times[k];
    const auto n = static_cast<long>(std::max(1.0, std::ceil(span / config.dt - 1e-9)));
    const double h = span / static_cast<double>(n);
    for (long i = 0; i < n; ++i) {
      if (++steps > config.max_steps)
        throw IntegrationError("fixed-step solver exceeded max_steps", times[k] + i * h);
      const double t = times[k] + static_cast<double>(i) * h;
      switch (config.method) {
        case Method::Euler: x = step_euler(rhs, x, t, h); break;
        case Method::Trapezoidal: x = step_trapezoidal(rhs, x, t, h); break;
        case Method::ModifiedEuler: x = step_modified_euler(rhs, x, t, h); break;
        case Method::RK4: x = step_rk4(rhs, x, t, h); break;
        case Method::RK2:
        case Method::GeneralRK: x = step_general_rk(*tableau, rhs, x, t, h); break;
        case Method::Adaptive45: break;
      }
    }
    out.states.push_back(x);
  }
  out.stats.accepted = steps;
  return out;
}

}  // namespace slir::ode

#endif  // SLIR_ODE_HPP
