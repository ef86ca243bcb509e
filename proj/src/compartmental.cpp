#include "slir/compartmental.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace slir {

double r0_next_generation(const Eigen::MatrixXd& inflow_jacobian,
                          const Eigen::MatrixXd& outflow_jacobian) {
  const Eigen::Index m = inflow_jacobian.rows();
  if (m == 0 || inflow_jacobian.cols() != m || outflow_jacobian.rows() != m ||
      outflow_jacobian.cols() != m)
    throw DomainError("next-generation Jacobians must be square and of equal size");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(outflow_jacobian);
  if (!lu.isInvertible())
    throw DomainError("outflow Jacobian is singular; next-generation matrix undefined");
  const Eigen::MatrixXd ngm = inflow_jacobian * lu.inverse();
  if (m == 1) return std::abs(ngm(0, 0));
  Eigen::EigenSolver<Eigen::MatrixXd> es(ngm, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double r0_next_generation(const FlowFunction& inflow, const FlowFunction& outflow,
                          const Eigen::VectorXd& dfe, const std::vector<int>& infected,
                          double relative_step) {
  const auto m = static_cast<Eigen::Index>(infected.size());
  if (m == 0) throw DomainError("no infected compartments given");
  for (int idx : infected)
    if (idx < 0 || idx >= dfe.size()) throw DomainError("infected index out of range");

  auto jacobian = [&](const FlowFunction& flow) {
    Eigen::MatrixXd J(m, m);
    for (Eigen::Index col = 0; col < m; ++col) {
      const int j = infected[static_cast<std::size_t>(col)];
      const double h = relative_step * std::max(1.0, std::abs(dfe(j)));
      Eigen::VectorXd up = dfe, down = dfe;
      up(j) += h;
      down(j) -= h;
      const Eigen::VectorXd fu = flow(up), fd = flow(down);
      if (fu.size() != m || fd.size() != m)
        throw DomainError("flow map must return one entry per infected compartment");
      J.col(col) = (fu - fd) / (2 * h);
    }
    return J;
  };
  return r0_next_generation(jacobian(inflow), jacobian(outflow));
}

double sir_r0_next_generation(double beta, double gamma, double N, double susceptible) {
  require_population(N);
  Eigen::MatrixXd A(1, 1), B(1, 1);
  A(0, 0) = beta * susceptible / N;
  B(0, 0) = gamma;
  return r0_next_generation(A, B);
}

double slir_r0_next_generation(const SlirParams& p, double N, double susceptible) {
  // I is the only infected compartment: inflow beta S I / N, outflow gamma I.
  return sir_r0_next_generation(p.beta(), p.gamma, N, susceptible);
}

CompartmentState slir_mitigation_equilibrium(const SlirParams& p, double N) {
  require_population(N);
  if (!(p.a + p.b > 0)) return CompartmentState(N, 0, 0, 0);
  return CompartmentState(p.b * N / (p.a + p.b), p.a * N / (p.a + p.b), 0, 0);
}

std::vector<double> effective_reproduction_series(double r0, const SlirTrajectory& trajectory,
                                                  double N) {
  require_population(N);
  std::vector<double> out;
  out.reserve(trajectory.size());
  for (const auto& x : trajectory.states) out.push_back(r0 * x(compartment::S) / N);
  return out;
}

SlirTrajectory simulate_slir(const SlirParams& params, double N, double i0,
                             const std::vector<double>& days, const ode::SolverConfig& solver) {
  require_population(N);
  if (!(i0 > 0 && i0 < N)) throw DomainError("initial cases must satisfy 0 < i0 < N");
  if (!params.valid()) throw DomainError("invalid SLIR parameters");
  const SlirSystem system(params, N);
  const CompartmentState x0(N - i0, 0.0, i0, 0.0);
  return ode::integrate(system, x0, days, solver);
}

SlirTrajectory simulate_slir(const SlirParams& params, double N, double i0, int horizon_days,
                             const ode::SolverConfig& solver) {
  if (horizon_days < 1) throw DomainError("horizon must be at least one day");
  std::vector<double> days(static_cast<std::size_t>(horizon_days) + 1);
  std::iota(days.begin(), days.end(), 0.0);
  return simulate_slir(params, N, i0, days, solver);
}

CompartmentState clamp_undershoot(const CompartmentState& x, double N) {
  CompartmentState out = x;
  const double floor = -1e-9 * N;
  for (Eigen::Index i = 0; i < out.size(); ++i)
    if (out(i) < 0 && out(i) >= floor) out(i) = 0;
  return out;
}

double attack_rate(const SlirTrajectory& trajectory, double N) {
  require_population(N);
  if (trajectory.size() == 0) throw DomainError("empty trajectory");
  const auto& x = trajectory.back();
  return (x(compartment::I) + x(compartment::R)) / N;
}

}  // namespace slir
