#ifndef SLIR_STATS_MODEL_HPP
#define SLIR_STATS_MODEL_HPP

#include "slir/compartmental.hpp"
#include "slir/ode.hpp"
#include "slir/random.hpp"

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace slir {

/// Structural and dispersion parameters of the hierarchical model.
struct ModelParams {
  double R0 = 1.0;
  double gamma = 0.5;
  double a = 0.1;
  double b = 0.5;
  double phi1 = 1.0;  ///< Beta dispersion of the mobility layer.
  double phi2 = 1.0;  ///< Negative binomial dispersion of the case layer.

  static constexpr int size = 6;
  static const std::array<std::string, size>& names();

  SlirParams structural() const { return {R0, gamma, a, b}; }
  bool in_support() const;

  Eigen::Matrix<double, size, 1> to_vector() const;
  static ModelParams from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);
};

/// log R0, logit gamma, logit a, logit b, log phi1, log phi2.
using UnconstrainedParams = Eigen::Matrix<double, ModelParams::size, 1>;

/// Aligned daily observations for days 0 .. days()-1.
///
/// A NaN mobility value or a negative case count marks a missing day. The
/// mobility value of day 0 never enters the likelihood because L(0) = 0.
struct ObservedData {
  std::vector<double> y_L;
  std::vector<long long> y_I;
  double N = 0;
  double i0 = 1;
  std::string t0_label;

  static constexpr long long missing_count = -1;

  int days() const { return static_cast<int>(y_I.size()); }
  void validate() const;

  /// First `n` days.
  ObservedData head(int n) const;
};

/// Sum of the prior log densities: lognormal(0, 1) on R0, Uniform(0, 1) on
/// gamma and b, Beta(1, 5) on a, InverseGamma(0.1, 0.1) on phi1 and phi2.
/// Returns -infinity outside the support.
double log_prior(const ModelParams& p);

/// log Beta(y | phi1 L/N, phi1 (1 - L/N)). L/N is clamped to [1e-12, 1 - 1e-12].
double beta_obs_logpdf(double y, double L, double N, double phi1);

/// Negative binomial with mean mu and variance mu + mu^2 / phi2.
double negbin_obs_logpmf(long long y, double mu, double phi2);

/// Counts ODE failures inside likelihood evaluations. Shared between copies
/// of a posterior so that concurrent chains report into one place.
using FailureCounter = std::shared_ptr<std::atomic<long>>;

/// Solves the SLIR system and sums the mobility terms for days >= 1 and the
/// case terms for days >= 0, skipping missing observations. Solver failures
/// give -infinity and bump `failures` when provided.
double log_likelihood(const ModelParams& p, const ObservedData& data,
                      const ode::SolverConfig& solver, std::atomic<long>* failures = nullptr);

UnconstrainedParams to_unconstrained(const ModelParams& p);
ModelParams to_constrained(const Eigen::Ref<const Eigen::VectorXd>& u);

/// log |det d to_constrained / du|.
double log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& u);

double log_posterior(const Eigen::Ref<const Eigen::VectorXd>& u, const ObservedData& data,
                     const ode::SolverConfig& solver, std::atomic<long>* failures = nullptr);

/// Raised when a finite-difference stencil touches a non-finite value.
class GradientError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Central differences with step max(1e-5, 1e-5 |u_i|) per coordinate.
Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& u,
    double relative_step = 1e-5, double min_step = 1e-5);

Eigen::VectorXd grad_log_posterior(const Eigen::Ref<const Eigen::VectorXd>& u,
                                   const ObservedData& data, const ode::SolverConfig& solver);

/// Independent draws from each prior.
ModelParams sample_prior(Rng& rng);

/// Default solver inside the likelihood: adaptive 4(5), tolerances 1e-6.
ode::SolverConfig default_likelihood_solver();

/**
 * The log posterior on unconstrained space as an evaluable target.
 *
 * Copies share the failure counter. With `include_likelihood` false the
 * target is the prior pushed through the transform, which is what the
 * prior predictive workflow and transform checks use.
 */
class SlirPosterior {
public:
  SlirPosterior(ObservedData data, ode::SolverConfig solver, bool include_likelihood = true);

  int dimension() const { return ModelParams::size; }
  double log_density(const Eigen::VectorXd& u) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const;

  const ObservedData& data() const { return data_; }
  const ode::SolverConfig& solver() const { return solver_; }
  long failures() const { return failures_->load(); }

private:
  ObservedData data_;
  ode::SolverConfig solver_;
  bool include_likelihood_;
  FailureCounter failures_;
};

}  // namespace slir

#endif  // SLIR_STATS_MODEL_HPP
