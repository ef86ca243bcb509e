#include "slir/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace slir {

ode::SolverConfig default_simulation_solver() { return ode::SolverConfig::adaptive(1e-8, 1e-8); }

ObservedData generate_synthetic(const ModelParams& params, double N, double i0, int horizon,
                                Rng& rng, const ode::SolverConfig& solver) {
  if (!params.in_support()) throw DomainError("synthetic data needs parameters inside the support");
  const SlirTrajectory traj = simulate_slir(params.structural(), N, i0, horizon, solver);
  ObservedData data;
  data.N = N;
  data.i0 = i0;
  data.t0_label = "day 0";
  data.y_L.resize(traj.size());
  data.y_I.resize(traj.size());
  for (std::size_t t = 0; t < traj.size(); ++t) {
    const CompartmentState x = clamp_undershoot(traj.states[t], N);
    if (t == 0) {
      data.y_L[t] = 1e-6;
    } else {
      const double mean = std::clamp(x(compartment::L) / N, 1e-12, 1.0 - 1e-12);
      data.y_L[t] = std::clamp(draw_beta(rng, params.phi1 * mean, params.phi1 * (1 - mean)), 1e-6,
                               1.0 - 1e-6);
    }
    data.y_I[t] = draw_negbin(rng, std::max(x(compartment::I), 1e-8), params.phi2);
  }
  return data;
}

double PredictiveBand::width_I(int day) const {
  const auto d = static_cast<std::size_t>(day);
  if (day < 0 || d >= upper_I.size()) throw AnalysisError("band day out of range");
  return upper_I[d] - lower_I[d];
}

PredictiveBand predictive_band(const std::vector<ModelParams>& draws, double N, double i0, int days,
                               Rng& rng, bool prior, const ode::SolverConfig& solver,
                               int min_paths) {
  if (draws.size() < 100)
    throw AnalysisError("predictive band needs at least 100 parameter draws, got " +
                        std::to_string(draws.size()));
  if (days < 2) throw AnalysisError("predictive band needs at least two days");
  const std::size_t n_paths = std::max(draws.size(), static_cast<std::size_t>(std::max(min_paths, 1)));
  const auto n_days = static_cast<std::size_t>(days);

  std::vector<std::vector<double>> sims_L(n_days), sims_I(n_days);
  for (auto& v : sims_L) v.reserve(n_paths);
  for (auto& v : sims_I) v.reserve(n_paths);

  for (std::size_t k = 0; k < n_paths; ++k) {
    const ModelParams& p = draws[k % draws.size()];
    ObservedData path;
    try {
      path = generate_synthetic(p, N, i0, days - 1, rng, solver);
    } catch (const std::exception&) {
      // Prior draws can produce systems the solver rejects; such paths are dropped.
      continue;
    }
    for (std::size_t t = 0; t < n_days; ++t) {
      sims_L[t].push_back(path.y_L[t]);
      sims_I[t].push_back(static_cast<double>(path.y_I[t]));
    }
  }
  if (sims_I.front().size() < n_paths / 2)
    throw AnalysisError("more than half of the predictive simulations failed");

  PredictiveBand band;
  band.prior = prior;
  for (std::size_t t = 0; t < n_days; ++t) {
    band.median_L.push_back(mcmc::quantile(sims_L[t], 0.5));
    band.lower_L.push_back(mcmc::quantile(sims_L[t], 0.025));
    band.upper_L.push_back(mcmc::quantile(sims_L[t], 0.975));
    band.median_I.push_back(mcmc::quantile(sims_I[t], 0.5));
    band.lower_I.push_back(mcmc::quantile(sims_I[t], 0.025));
    band.upper_I.push_back(mcmc::quantile(sims_I[t], 0.975));
  }
  return band;
}

std::vector<ModelParams> FitResult::draws() const {
  std::vector<ModelParams> out;
  for (const auto& m : constrained)
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(ModelParams::from_vector(m.row(i).transpose()));
  return out;
}

const mcmc::ParameterSummary& FitResult::parameter(const std::string& name) const {
  for (const auto& s : summary)
    if (s.name == name) return s;
  throw AnalysisError("no summary for parameter '" + name + "'");
}

mcmc::TargetDensity make_target(const SlirPosterior& posterior) {
  mcmc::TargetDensity target;
  target.dimension = posterior.dimension();
  target.log_density = [posterior](const Eigen::VectorXd& u) { return posterior.log_density(u); };
  target.gradient = [posterior](const Eigen::VectorXd& u) -> Eigen::VectorXd {
    try {
      return posterior.gradient(u);
    } catch (const GradientError&) {
      return Eigen::VectorXd::Constant(u.size(), std::numeric_limits<double>::quiet_NaN());
    }
  };
  target.initialize = [](Rng& rng) -> Eigen::VectorXd {
    Eigen::VectorXd u = to_unconstrained(sample_prior(rng));
    for (int attempt = 0; attempt < 1000 && u.cwiseAbs().maxCoeff() > kInitBox; ++attempt)
      u = to_unconstrained(sample_prior(rng));
    return u;
  };
  return target;
}

std::vector<Eigen::MatrixXd> constrained_draws(const mcmc::ChainSet& chains) {
  std::vector<Eigen::MatrixXd> out;
  for (int c = 0; c < static_cast<int>(chains.chains.size()); ++c) {
    const Eigen::MatrixXd u = chains.post_warmup(c);
    Eigen::MatrixXd x(u.rows(), u.cols());
    for (Eigen::Index i = 0; i < u.rows(); ++i)
      x.row(i) = to_constrained(u.row(i).transpose()).to_vector().transpose();
    out.push_back(std::move(x));
  }
  return out;
}

FitResult fit(const ObservedData& data, const FitConfig& config) {
  const SlirPosterior posterior(data, config.solver);
  FitResult result;
  result.chains = mcmc::run_chains(make_target(posterior), config.sampler);
  result.constrained = constrained_draws(result.chains);
  const auto& names = ModelParams::names();
  result.summary = mcmc::summarize(result.constrained, {names.begin(), names.end()});
  result.ode_failures = posterior.failures();
  return result;
}

ForecastResult forecast(const ObservedData& data, int train_days, int total_days,
                        const FitConfig& config) {
  if (!(train_days > 0 && train_days <= total_days))
    throw AnalysisError("forecast needs 0 < train_days <= total_days");
  if (train_days > data.days()) throw AnalysisError("training window exceeds the data");
  ForecastResult out;
  out.train_days = train_days;
  out.total_days = total_days;
  out.truth = data;
  out.fit = fit(data.head(train_days), config);
  Rng rng = make_stream(config.sampler.seed, 0xF04EC457ULL);
  out.band = predictive_band(out.fit.draws(), data.N, data.i0, total_days, rng, false);
  return out;
}

double peak_lockdown_fraction(const SlirTrajectory& trajectory, double N) {
  double peak = 0;
  for (const auto& x : trajectory.states) peak = std::max(peak, x(compartment::L) / N);
  return peak;
}

std::vector<SensitivityRow> sensitivity_sweep(const ModelParams& base, double N, double i0, int horizon,
                                              const std::vector<double>& targets,
                                              const SensitivityOptions& options) {
  const SlirParams structural = base.structural();
  auto run = [&](double a) {
    SlirParams p = structural;
    p.a = a;
    return simulate_slir(p, N, i0, horizon, options.solver);
  };
  auto peak_at = [&](double log_a) { return peak_lockdown_fraction(run(std::exp(log_a)), N); };

  const double lo0 = std::log(options.a_min), hi0 = std::log(options.a_max);
  const double peak_lo = peak_at(lo0), peak_hi = peak_at(hi0);

  std::vector<SensitivityRow> rows;
  for (double target : targets) {
    SensitivityRow row;
    row.target_decline = target;
    if (!(target > 0 && target <= 1)) {
      row.error = "target decline must be in (0, 1]";
      rows.push_back(row);
      continue;
    }
    double log_a;
    if (target >= peak_hi) {
      if (target - peak_hi > options.tolerance) {
        std::ostringstream msg;
        msg << "target " << target << " exceeds the largest reachable peak " << peak_hi;
        row.error = msg.str();
        rows.push_back(row);
        continue;
      }
      log_a = hi0;
    } else if (target <= peak_lo) {
      std::ostringstream msg;
      msg << "target " << target << " is below the smallest reachable peak " << peak_lo;
      row.error = msg.str();
      rows.push_back(row);
      continue;
    } else {
      double lo = lo0, hi = hi0;
      for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        (peak_at(mid) < target ? lo : hi) = mid;
      }
      log_a = 0.5 * (lo + hi);
    }
    const SlirTrajectory traj = run(std::exp(log_a));
    row.a = std::exp(log_a);
    row.peak_decline = peak_lockdown_fraction(traj, N);
    row.attack_rate = attack_rate(traj, N);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace slir
