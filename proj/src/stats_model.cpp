#include "slir/stats_model.hpp"

#include "slir/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace slir {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double logit(double x) { return std::log(x) - std::log1p(-x); }

double inv_logit(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// log(inv_logit(u)), stable for large |u|.
double log_inv_logit(double u) { return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u)); }

}  // namespace

const std::array<std::string, ModelParams::size>& ModelParams::names() {
  static const std::array<std::string, size> n{"R0", "gamma", "a", "b", "phi1", "phi2"};
  return n;
}

bool ModelParams::in_support() const {
  const auto unit = [](double x) { return x > 0 && x < 1; };
  return R0 > 0 && std::isfinite(R0) && unit(gamma) && unit(a) && unit(b) && phi1 > 0 &&
         std::isfinite(phi1) && phi2 > 0 && std::isfinite(phi2);
}

Eigen::Matrix<double, ModelParams::size, 1> ModelParams::to_vector() const {
  Eigen::Matrix<double, size, 1> v;
  v << R0, gamma, a, b, phi1, phi2;
  return v;
}

ModelParams ModelParams::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
  if (v.size() != size) throw std::invalid_argument("expected 6 model parameters");
  return {v(0), v(1), v(2), v(3), v(4), v(5)};
}

void ObservedData::validate() const {
  require_population(N);
  if (!(i0 > 0 && i0 < N)) throw DomainError("initial cases must satisfy 0 < i0 < N");
  if (y_L.size() != y_I.size())
    throw DomainError("mobility and case series differ in length (" +
                      std::to_string(y_L.size()) + " vs " + std::to_string(y_I.size()) + ")");
  if (y_I.empty()) throw DomainError("no observations");
  for (std::size_t t = 0; t < y_L.size(); ++t) {
    if (std::isnan(y_L[t])) continue;
    if (!(y_L[t] > 0 && y_L[t] < 1))
      throw DomainError("mobility fraction on day " + std::to_string(t) + " is outside (0, 1)");
  }
}

ObservedData ObservedData::head(int n) const {
  if (n < 1 || n > days()) throw DomainError("head length out of range");
  ObservedData out = *this;
  out.y_L.resize(static_cast<std::size_t>(n));
  out.y_I.resize(static_cast<std::size_t>(n));
  return out;
}

double log_prior(const ModelParams& p) {
  if (!p.in_support()) return neg_inf;
  return dist::lognormal_logpdf(p.R0, 0.0, 1.0) + dist::uniform_logpdf(p.gamma, 0.0, 1.0) +
         dist::uniform_logpdf(p.b, 0.0, 1.0) + dist::beta_logpdf(p.a, 1.0, 5.0) +
         dist::inv_gamma_logpdf(p.phi1, 0.1, 0.1) + dist::inv_gamma_logpdf(p.phi2, 0.1, 0.1);
}

double beta_obs_logpdf(double y, double L, double N, double phi1) {
  if (!(N > 0) || !(phi1 > 0) || !std::isfinite(phi1) || !std::isfinite(L)) return neg_inf;
  const double mean = std::clamp(L / N, 1e-12, 1.0 - 1e-12);
  return dist::beta_logpdf(y, phi1 * mean, phi1 * (1.0 - mean));
}

double negbin_obs_logpmf(long long y, double mu, double phi2) {
  return dist::negbin2_logpmf(y, mu, phi2);
}

ode::SolverConfig default_likelihood_solver() { return ode::SolverConfig::adaptive(1e-6, 1e-6); }

double log_likelihood(const ModelParams& p, const ObservedData& data,
                      const ode::SolverConfig& solver, std::atomic<long>* failures) {
  if (!p.in_support()) return neg_inf;
  std::vector<double> days(static_cast<std::size_t>(data.days()));
  std::iota(days.begin(), days.end(), 0.0);

  SlirTrajectory traj;
  try {
    traj = simulate_slir(p.structural(), data.N, data.i0, days, solver);
  } catch (const ode::IntegrationError&) {
    if (failures) failures->fetch_add(1, std::memory_order_relaxed);
    return neg_inf;
  }

  double total = 0.0;
  for (std::size_t t = 0; t < days.size(); ++t) {
    const CompartmentState x = clamp_undershoot(traj.states[t], data.N);
    if (t >= 1 && !std::isnan(data.y_L[t]))
      total += beta_obs_logpdf(data.y_L[t], x(compartment::L), data.N, p.phi1);
    if (data.y_I[t] >= 0)
      total += negbin_obs_logpmf(data.y_I[t], std::max(x(compartment::I), 1e-8), p.phi2);
    if (!(total > neg_inf)) return neg_inf;
  }
  return std::isnan(total) ? neg_inf : total;
}

UnconstrainedParams to_unconstrained(const ModelParams& p) {
  UnconstrainedParams u;
  u << std::log(p.R0), logit(p.gamma), logit(p.a), logit(p.b), std::log(p.phi1),
      std::log(p.phi2);
  return u;
}

ModelParams to_constrained(const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != ModelParams::size) throw std::invalid_argument("expected 6 coordinates");
  return {std::exp(u(0)), inv_logit(u(1)), inv_logit(u(2)),
          inv_logit(u(3)), std::exp(u(4)), std::exp(u(5))};
}

double log_jacobian(const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (u.size() != ModelParams::size) throw std::invalid_argument("expected 6 coordinates");
  double out = u(0) + u(4) + u(5);
  for (int i : {1, 2, 3}) out += log_inv_logit(u(i)) + log_inv_logit(-u(i));
  return out;
}

double log_posterior(const Eigen::Ref<const Eigen::VectorXd>& u, const ObservedData& data,
                     const ode::SolverConfig& solver, std::atomic<long>* failures) {
  if (!u.allFinite()) return neg_inf;
  const ModelParams p = to_constrained(u);
  const double prior = log_prior(p);
  if (!(prior > neg_inf)) return neg_inf;
  const double lp = prior + log_jacobian(u) + log_likelihood(p, data, solver, failures);
  return std::isnan(lp) ? neg_inf : lp;
}

Eigen::VectorXd finite_difference_gradient(
    const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& u,
    double relative_step, double min_step) {
  Eigen::VectorXd grad(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double h = std::max(min_step, relative_step * std::abs(u(i)));
    Eigen::VectorXd up = u, down = u;
    up(i) += h;
    down(i) -= h;
    const double fu = f(up), fd = f(down);
    if (!std::isfinite(fu) || !std::isfinite(fd))
      throw GradientError("non-finite log density next to coordinate " + std::to_string(i) +
                          "; use a smaller step or tighter solver tolerances");
    // (up(i) - down(i)) is the representable stencil width.
    grad(i) = (fu - fd) / (up(i) - down(i));
  }
  return grad;
}

Eigen::VectorXd grad_log_posterior(const Eigen::Ref<const Eigen::VectorXd>& u,
                                   const ObservedData& data, const ode::SolverConfig& solver) {
  const Eigen::VectorXd point = u;
  return finite_difference_gradient(
      [&](const Eigen::VectorXd& v) { return log_posterior(v, data, solver); }, point);
}

ModelParams sample_prior(Rng& rng) {
  ModelParams p;
  p.R0 = std::exp(draw_normal(rng));
  p.gamma = draw_uniform(rng);
  p.a = draw_beta(rng, 1.0, 5.0);
  p.b = draw_uniform(rng);
  auto inv_gamma = [&rng] {
    for (;;) {
      const double g = draw_gamma(rng, 0.1, 1.0 / 0.1);
      if (g > 0 && std::isfinite(1.0 / g)) return 1.0 / g;
    }
  };
  p.phi1 = inv_gamma();
  p.phi2 = inv_gamma();
  // Uniform draws may hit the closed end of [0, 1).
  while (!(p.gamma > 0)) p.gamma = draw_uniform(rng);
  while (!(p.b > 0)) p.b = draw_uniform(rng);
  return p;
}

SlirPosterior::SlirPosterior(ObservedData data, ode::SolverConfig solver, bool include_likelihood)
    : data_(std::move(data)),
      solver_(std::move(solver)),
      include_likelihood_(include_likelihood),
      failures_(std::make_shared<std::atomic<long>>(0)) {
  if (include_likelihood_) data_.validate();
  solver_.validate();
}

double SlirPosterior::log_density(const Eigen::VectorXd& u) const {
  if (include_likelihood_) return log_posterior(u, data_, solver_, failures_.get());
  if (!u.allFinite()) return neg_inf;
  const double prior = log_prior(to_constrained(u));
  return prior > neg_inf ? prior + log_jacobian(u) : neg_inf;
}

Eigen::VectorXd SlirPosterior::gradient(const Eigen::VectorXd& u) const {
  return finite_difference_gradient([this](const Eigen::VectorXd& v) { return log_density(v); },
                                    u);
}

}  // namespace slir
