#ifndef SLIR_COMPARTMENTAL_HPP
#define SLIR_COMPARTMENTAL_HPP

#include "slir/ode.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace slir {

/// Raised for non-physical model inputs (N <= 0, i0 outside (0, N), ...).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// (S, I, R) of the classical model.
template <typename Scalar>
using SirState = Eigen::Matrix<Scalar, 3, 1>;

/// (S, L, I, R) where L holds susceptibles removed by mitigation.
template <typename Scalar>
using SlirState = Eigen::Matrix<Scalar, 4, 1>;

using CompartmentState = SlirState<double>;
using SlirTrajectory = ode::Trajectory<CompartmentState>;

namespace compartment {
inline constexpr int S = 0;
inline constexpr int L = 1;
inline constexpr int I = 2;
inline constexpr int R = 3;
}  // namespace compartment

/// Structural SLIR parameters. The transmission rate is derived as
/// beta = gamma * R0 and never stored.
template <typename Scalar>
struct BasicSlirParams {
  Scalar R0{};
  Scalar gamma{};
  Scalar a{};
  Scalar b{};

  Scalar beta() const { return gamma * R0; }

  bool valid() const {
    using std::isfinite;
    return isfinite(R0) && isfinite(gamma) && isfinite(a) && isfinite(b) && R0 >= Scalar(0) &&
           gamma > Scalar(0) && a >= Scalar(0) && b >= Scalar(0);
  }
};

using SlirParams = BasicSlirParams<double>;

inline void require_population(double N) {
  if (!(N > 0) || !std::isfinite(N)) throw DomainError("population N must be positive");
}

template <typename Scalar>
SirState<Scalar> sir_rhs(const SirState<Scalar>& x, double /*t*/, Scalar beta, Scalar gamma,
                         Scalar N) {
  const Scalar infection = beta * x(0) * x(1) / N;
  const Scalar removal = gamma * x(1);
  return SirState<Scalar>(-infection, infection - removal, removal);
}

template <typename Scalar>
SlirState<Scalar> slir_rhs(const SlirState<Scalar>& x, double /*t*/,
                           const BasicSlirParams<Scalar>& p, Scalar N) {
  const Scalar infection = p.gamma * p.R0 * x(0) * x(2) / N;
  const Scalar lockdown = p.a * x(0) - p.b * x(1);
  const Scalar removal = p.gamma * x(2);
  return SlirState<Scalar>(-infection - lockdown, lockdown, infection - removal, removal);
}

/// Callable wrapper for the integrators; N is validated once on construction.
struct SlirSystem {
  SlirParams params;
  double N;

  SlirSystem(const SlirParams& p, double population) : params(p), N(population) {
    require_population(N);
  }

  CompartmentState operator()(const CompartmentState& x, double t) const {
    return slir_rhs(x, t, params, N);
  }
};

struct SirSystem {
  double beta;
  double gamma;
  double N;

  SirState<double> operator()(const SirState<double>& x, double t) const {
    return sir_rhs(x, t, beta, gamma, N);
  }
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> sir_jacobian(const SirState<Scalar>& x, Scalar beta, Scalar gamma,
                                         Scalar N) {
  Eigen::Matrix<Scalar, 3, 3> J;
  J << -beta * x(1) / N, -beta * x(0) / N, 0,
        beta * x(1) / N,  beta * x(0) / N - gamma, 0,
        0,                gamma, 0;
  return J;
}

template <typename Scalar>
Eigen::Matrix<Scalar, 4, 4> slir_jacobian(const SlirState<Scalar>& x,
                                          const BasicSlirParams<Scalar>& p, Scalar N) {
  const Scalar beta = p.beta();
  Eigen::Matrix<Scalar, 4, 4> J;
  J << -beta * x(2) / N - p.a, p.b,  -beta * x(0) / N, 0,
        p.a,                  -p.b,   0,                0,
        beta * x(2) / N,       0,     beta * x(0) / N - p.gamma, 0,
        0,                     0,     p.gamma,          0;
  return J;
}

/// Spectral radius of A * B^-1, where A and B are the Jacobians of the
/// infectious inflows and outflows with respect to the infected states,
/// evaluated at a disease-free equilibrium.
double r0_next_generation(const Eigen::MatrixXd& inflow_jacobian,
                          const Eigen::MatrixXd& outflow_jacobian);

/// Infectious flow map evaluated on the full state.
using FlowFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/**
 * Next-generation R0 for a general model from its infectious inflow (new
 * infections) and outflow maps. Jacobians with respect to the compartments
 * listed in `infected` are taken by central differences at `dfe`.
 */
double r0_next_generation(const FlowFunction& inflow, const FlowFunction& outflow,
                          const Eigen::VectorXd& dfe, const std::vector<int>& infected,
                          double relative_step = 1e-6);

/// Analytic next-generation R0 for SIR at (S*, 0, 0): beta S* / (gamma N).
double sir_r0_next_generation(double beta, double gamma, double N, double susceptible);

/// Analytic next-generation R0 for SLIR with susceptibles S* at the DFE.
/// With S* = N (nobody locked down yet) this is R0 itself.
double slir_r0_next_generation(const SlirParams& p, double N, double susceptible);

/// The SLIR state with no infection where mitigation inflow and outflow
/// balance: S* = b N / (a + b), L* = a N / (a + b).
CompartmentState slir_mitigation_equilibrium(const SlirParams& p, double N);

/// R_t = R0 * S(t) / N at each point of the trajectory.
std::vector<double> effective_reproduction_series(double r0, const SlirTrajectory& trajectory,
                                                  double N);

/// Integrates from S = N - i0, L = 0, I = i0, R = 0 and reports days
/// 0, 1, ..., horizon_days.
SlirTrajectory simulate_slir(const SlirParams& params, double N, double i0, int horizon_days,
                             const ode::SolverConfig& solver);

/// Same as simulate_slir but for an arbitrary increasing grid of days.
SlirTrajectory simulate_slir(const SlirParams& params, double N, double i0,
                             const std::vector<double>& days, const ode::SolverConfig& solver);

/// Compartments slightly below zero (down to -1e-9 N) are set to zero. Used
/// only when feeding observation models; the raw trajectory is left alone.
CompartmentState clamp_undershoot(const CompartmentState& x, double N);

/// Ever-infected fraction (I + R) / N at the last point.
double attack_rate(const SlirTrajectory& trajectory, double N);

}  // namespace slir

#endif  // SLIR_COMPARTMENTAL_HPP
