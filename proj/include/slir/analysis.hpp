#ifndef SLIR_ANALYSIS_HPP
#define SLIR_ANALYSIS_HPP

#include "slir/compartmental.hpp"
#include "slir/diagnostics.hpp"
#include "slir/ode.hpp"
#include "slir/random.hpp"
#include "slir/sampler.hpp"
#include "slir/stats_model.hpp"

#include <optional>
#include <string>
#include <vector>

namespace slir {

class AnalysisError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Solver used for forward simulation outside the likelihood.
ode::SolverConfig default_simulation_solver();

/// Simulates days 0..horizon and draws y_L(t) ~ Beta(phi1 L/N, phi1 (1 - L/N))
/// for t >= 1 and y_I(t) ~ NegBin(I(t), phi2) for every day. Day 0 mobility
/// is set to the lower clamp 1e-6 since L(0) = 0.
ObservedData generate_synthetic(const ModelParams& params, double N, double i0, int horizon,
                                Rng& rng, const ode::SolverConfig& solver = default_simulation_solver());

/// Per-day median and central 95% interval of simulated observations.
struct PredictiveBand {
  bool prior = false;
  std::vector<double> median_L, lower_L, upper_L;
  std::vector<double> median_I, lower_I, upper_I;

  int days() const { return static_cast<int>(median_I.size()); }
  double width_I(int day) const;
};

/**
 * Simulates one observation path per parameter draw (cycling through the
 * draws until at least `min_paths` paths exist) and reports type-7 quantiles
 * per day. Needs at least 100 draws.
 */
PredictiveBand predictive_band(const std::vector<ModelParams>& draws, double N, double i0, int days,
                               Rng& rng, bool prior,
                               const ode::SolverConfig& solver = default_simulation_solver(),
                               int min_paths = 1000);

struct FitConfig {
  mcmc::SamplerConfig sampler;
  ode::SolverConfig solver = default_likelihood_solver();
};

struct FitResult {
  mcmc::ChainSet chains;
  /// Post-warmup draws per chain in constrained space, columns as ModelParams::names().
  std::vector<Eigen::MatrixXd> constrained;
  std::vector<mcmc::ParameterSummary> summary;
  long ode_failures = 0;

  std::vector<ModelParams> draws() const;
  const mcmc::ParameterSummary& parameter(const std::string& name) const;
};

/// Largest |u_i| of an initial point; prior draws outside the box are redrawn.
inline constexpr double kInitBox = 5.0;

/// The posterior as a sampler target. Chains start from prior draws whose
/// unconstrained coordinates all lie in [-kInitBox, kInitBox].
mcmc::TargetDensity make_target(const SlirPosterior& posterior);

/// Maps unconstrained chain draws to constrained space.
std::vector<Eigen::MatrixXd> constrained_draws(const mcmc::ChainSet& chains);

FitResult fit(const ObservedData& data, const FitConfig& config);

struct ForecastResult {
  int train_days = 0;
  int total_days = 0;
  PredictiveBand band;
  ObservedData truth;  ///< All supplied days; those past train_days are held out.
  FitResult fit;
};

/// Fits the first `train_days` days and projects the posterior predictive
/// band over `total_days` days.
ForecastResult forecast(const ObservedData& data, int train_days, int total_days,
                        const FitConfig& config);

/// max_t L(t) / N.
double peak_lockdown_fraction(const SlirTrajectory& trajectory, double N);

struct SensitivityRow {
  double target_decline = 0;
  double peak_decline = 0;  ///< Achieved max_t L(t)/N.
  double a = 0;             ///< Lockdown inflow rate that achieves it.
  double attack_rate = 0;
  std::optional<std::string> error;
};

struct SensitivityOptions {
  double a_min = 1e-8;
  double a_max = 1e3;
  /// A target within this distance of the largest reachable peak is accepted
  /// at a_max.
  double tolerance = 1e-3;
  ode::SolverConfig solver = default_simulation_solver();
};

/**
 * Hypothetical mobility scenarios: for each target peak decline, finds the
 * lockdown inflow rate `a` (holding R0, gamma and b at `base`) whose
 * trajectory peaks at that fraction of the population in L, then records the
 * attack rate at the horizon. Unreachable targets carry a per-row error.
 */
std::vector<SensitivityRow> sensitivity_sweep(const ModelParams& base, double N, double i0, int horizon,
                                              const std::vector<double>& targets,
                                              const SensitivityOptions& options = {});

}  // namespace slir

#endif  // SLIR_ANALYSIS_HPP
