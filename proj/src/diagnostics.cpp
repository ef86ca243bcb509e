#include "slir/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace slir::mcmc {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw DiagnosticError("quantile of an empty sample");
  if (!(p >= 0 && p <= 1)) throw DiagnosticError("quantile level must be in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

double sample_variance(const Eigen::VectorXd& x) {
  const double mean = x.mean();
  return (x.array() - mean).square().sum() / static_cast<double>(x.size() - 1);
}

// Biased autocovariance at one lag (divides by n).
double autocovariance(const Eigen::VectorXd& x, double mean, Eigen::Index lag) {
  const Eigen::Index n = x.size();
  double total = 0;
  for (Eigen::Index i = 0; i + lag < n; ++i) total += (x(i) - mean) * (x(i + lag) - mean);
  return total / static_cast<double>(n);
}

}  // namespace

double gelman_rubin(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.size() < 2) throw DiagnosticError("R-hat needs at least two chains");
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 10) throw DiagnosticError("R-hat needs at least ten draws per chain");

  const Eigen::Index half = n / 2;
  std::vector<Eigen::VectorXd> split;
  split.reserve(2 * chains.size());
  for (const auto& c : chains) {
    split.emplace_back(c.head(half));
    split.emplace_back(c.segment(n - half, half));
  }
  const auto m = static_cast<double>(split.size());
  const auto len = static_cast<double>(half);

  Eigen::VectorXd means(split.size()), vars(split.size());
  for (std::size_t j = 0; j < split.size(); ++j) {
    means(static_cast<Eigen::Index>(j)) = split[j].mean();
    vars(static_cast<Eigen::Index>(j)) = sample_variance(split[j]);
  }
  const double within = vars.mean();
  if (!(within > 0)) throw DiagnosticError("R-hat undefined: zero within-chain variance");
  const double between = len * (means.array() - means.mean()).square().sum() / (m - 1);
  const double pooled = (len - 1) / len * within + between / len;
  return std::sqrt(pooled / within);
}

double effective_sample_size(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw DiagnosticError("ESS needs at least one chain");
  Eigen::Index n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw DiagnosticError("ESS needs at least four draws per chain");
  const auto m = static_cast<double>(chains.size());
  const auto len = static_cast<double>(n);

  std::vector<Eigen::VectorXd> trimmed;
  std::vector<double> means;
  for (const auto& c : chains) {
    trimmed.emplace_back(c.head(n));
    means.push_back(trimmed.back().mean());
  }
  double within = 0;
  for (std::size_t j = 0; j < trimmed.size(); ++j)
    within += autocovariance(trimmed[j], means[j], 0) * len / (len - 1);
  within /= m;
  double pooled = within * (len - 1) / len;
  if (chains.size() > 1) {
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double between = 0;
    for (double mu : means) between += (mu - grand) * (mu - grand);
    pooled += between / (m - 1);
  }
  if (!(pooled > 0)) throw DiagnosticError("ESS undefined: zero variance");

  auto rho = [&](Eigen::Index lag) {
    double mean_acov = 0;
    for (std::size_t j = 0; j < trimmed.size(); ++j)
      mean_acov += autocovariance(trimmed[j], means[j], lag);
    mean_acov /= m;
    return 1.0 - (within - mean_acov) / pooled;
  };

  // Geyer: sum consecutive pairs while positive, forcing them non-increasing.
  double tau = -1.0;
  double previous_pair = std::numeric_limits<double>::infinity();
  for (Eigen::Index lag = 0; lag + 1 < n; lag += 2) {
    double pair = rho(lag) + rho(lag + 1);
    if (!(pair > 0)) break;
    pair = std::min(pair, previous_pair);
    previous_pair = pair;
    tau += 2.0 * pair;
  }
  // Antithetic chains can drive tau toward zero; bound it by 1/log10(mn).
  tau = std::max(tau, 1.0 / std::log10(m * len));
  return m * len / tau;
}

std::vector<ParameterSummary> summarize(const std::vector<Eigen::MatrixXd>& chains,
                                        const std::vector<std::string>& names) {
  if (chains.empty()) throw DiagnosticError("no chains to summarize");
  const Eigen::Index d = chains.front().cols();
  if (static_cast<Eigen::Index>(names.size()) != d)
    throw DiagnosticError("parameter names do not match draw columns");

  std::vector<ParameterSummary> out;
  for (Eigen::Index p = 0; p < d; ++p) {
    std::vector<Eigen::VectorXd> cols;
    std::vector<double> pooled;
    for (const auto& c : chains) {
      if (c.cols() != d) throw DiagnosticError("chains disagree on dimension");
      cols.emplace_back(c.col(p));
      pooled.insert(pooled.end(), c.col(p).data(), c.col(p).data() + c.rows());
    }
    if (pooled.size() < 4) throw DiagnosticError("too few draws to summarize");

    ParameterSummary s;
    s.name = names[static_cast<std::size_t>(p)];
    const Eigen::Map<const Eigen::VectorXd> all(pooled.data(), static_cast<Eigen::Index>(pooled.size()));
    s.mean = all.mean();
    s.sd = std::sqrt(sample_variance(all));
    s.median = quantile(pooled, 0.5);
    s.lower = quantile(pooled, 0.025);
    s.upper = quantile(pooled, 0.975);
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    // A frozen parameter has no R-hat or ESS.
    try {
      s.rhat = chains.size() >= 2 ? gelman_rubin(cols) : nan;
    } catch (const DiagnosticError&) {
      s.rhat = nan;
    }
    try {
      s.ess = effective_sample_size(cols);
    } catch (const DiagnosticError&) {
      s.ess = nan;
    }
    s.mcse = s.sd / std::sqrt(s.ess);
    out.push_back(s);
  }
  return out;
}

}  // namespace slir::mcmc
