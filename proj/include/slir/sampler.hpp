#ifndef SLIR_SAMPLER_HPP
#define SLIR_SAMPLER_HPP

#include "slir/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace slir::mcmc {

class SamplerError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Log density on R^d with its gradient. The density may return -infinity;
/// a gradient with non-finite entries marks the point as divergent.
struct TargetDensity {
  int dimension = 0;
  std::function<double(const Eigen::VectorXd&)> log_density;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  /// Draws a starting point. Uniform(-2, 2) per coordinate when empty.
  std::function<Eigen::VectorXd(Rng&)> initialize;
};

struct RandomWalkConfig {
  double scale = 1.0;
  /// Proposal covariance before scaling; identity when empty.
  std::optional<Eigen::MatrixXd> covariance;
  double target_accept = 0.234;
};

struct HmcConfig {
  double step_size = 0.1;
  int n_steps = 10;
};

struct NutsConfig {
  int max_tree_depth = 10;
};

using Algorithm = std::variant<RandomWalkConfig, HmcConfig, NutsConfig>;

struct SamplerConfig {
  int n_chains = 4;
  int n_iter = 10000;
  int n_warmup = 5000;
  std::uint64_t seed = 20200308;
  Algorithm algorithm = NutsConfig{};
  double target_accept = 0.8;
  bool adapt_step_size = true;
  /// Windowed diagonal inverse-metric adaptation during warmup.
  bool adapt_diag_mass = false;
  /// Starting step size; 0 selects the doubling/halving heuristic.
  double initial_step_size = 0.0;
  double divergence_threshold = 1000.0;
  int init_attempts = 100;
  /// Each chain starts at the best of this many finite initial draws.
  int init_candidates = 1;
  bool parallel = true;

  void validate() const;
};

/// Position with its cached log density and gradient.
struct PhasePoint {
  Eigen::VectorXd theta;
  double log_density = 0.0;
  Eigen::VectorXd grad;
};

struct Transition {
  PhasePoint point;
  double accept_stat = 0.0;
  bool divergent = false;
  bool accepted = false;
  int n_leapfrog = 0;
  int tree_depth = 0;
};

/// Symmetric Gaussian proposal with covariance `proposal_cholesky *
/// proposal_cholesky^T`, accepted with probability min(1, p(new)/p(old)).
/// The returned point carries no gradient.
Transition metropolis_step(const TargetDensity& target, const PhasePoint& current,
                           const Eigen::MatrixXd& proposal_cholesky, Rng& rng);

struct LeapfrogResult {
  Eigen::VectorXd theta;
  Eigen::VectorXd r;
  Eigen::VectorXd grad;  ///< Gradient at the final position.
  bool divergent = false;
};

/**
 * `n_steps` leapfrog steps of size `eps`: half kick, drift, half kick. With
 * a diagonal inverse metric the drift uses M^-1 r; empty means identity.
 * `grad_start` is the gradient at `theta`.
 */
LeapfrogResult leapfrog(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                        const Eigen::VectorXd& theta, const Eigen::VectorXd& r,
                        const Eigen::VectorXd& grad_start, double eps, int n_steps,
                        const Eigen::VectorXd& inv_metric = {});

/// Overload that evaluates the starting gradient itself.
LeapfrogResult leapfrog(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                        const Eigen::VectorXd& theta, const Eigen::VectorXd& r, double eps,
                        int n_steps);

/// -log p(theta) + r^T M^-1 r / 2.
double hamiltonian(double log_density, const Eigen::VectorXd& r,
                   const Eigen::VectorXd& inv_metric = {});

Transition hmc_step(const TargetDensity& target, const PhasePoint& current, double eps,
                    int n_steps, Rng& rng, const Eigen::VectorXd& inv_metric = {},
                    double divergence_threshold = 1000.0);

/**
 * No-U-Turn transition with multinomial selection. The trajectory doubles in
 * a random direction until a subtree makes a U-turn, diverges, or the depth
 * budget is spent; `max_tree_depth = 0` performs a single leapfrog step with
 * a Metropolis accept/reject.
 */
Transition nuts_step(const TargetDensity& target, const PhasePoint& current, double eps,
                     int max_tree_depth, Rng& rng, const Eigen::VectorXd& inv_metric = {},
                     double divergence_threshold = 1000.0);

/// Step size heuristic: doubles or halves eps until the one-step
/// acceptance probability crosses 1/2.
double find_reasonable_step_size(const TargetDensity& target, const PhasePoint& point,
                                 double eps, Rng& rng, const Eigen::VectorXd& inv_metric = {});

/// Dual averaging of log step size toward a target acceptance statistic.
class DualAveraging {
public:
  DualAveraging(double initial_step_size, double target_accept, double gamma = 0.05,
                double t0 = 10.0, double kappa = 0.75);

  void restart(double step_size);
  /// Feeds one acceptance statistic, returns the step size to use next.
  double update(double accept_stat);
  double step_size() const;
  /// Averaged iterate, used once adaptation ends.
  double final_step_size() const;

private:
  double mu_, log_eps_, log_eps_bar_ = 0.0, h_bar_ = 0.0, counter_ = 0.0;
  double target_, gamma_, t0_, kappa_;
};

struct Chain {
  Eigen::MatrixXd draws;  ///< One row per iteration, warmup included.
  std::vector<double> log_density;
  std::vector<double> accept_stat;
  std::vector<double> step_size;
  std::vector<int> n_leapfrog;
  std::vector<int> tree_depth;
  std::vector<char> divergent;
  Eigen::VectorXd inv_metric;
  long density_evaluations = 0;
  long gradient_evaluations = 0;
};

struct ChainSet {
  std::vector<Chain> chains;
  int n_warmup = 0;
  int n_iter = 0;

  int dimension() const;
  int n_kept() const { return n_iter - n_warmup; }
  /// Post-warmup draws of one chain (rows = iterations).
  Eigen::MatrixXd post_warmup(int chain) const;
  /// Post-warmup draws of one coordinate across chains.
  std::vector<Eigen::VectorXd> parameter(int index) const;
  long divergences() const;
  double mean_accept_stat() const;
};

/// Runs `config.n_chains` independent chains. Chain c draws from stream c of
/// `config.seed`, so results are reproducible and independent of threading.
ChainSet run_chains(const TargetDensity& target, const SamplerConfig& config);

}  // namespace slir::mcmc

#endif  // SLIR_SAMPLER_HPP
