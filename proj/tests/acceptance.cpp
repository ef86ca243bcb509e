// Acceptance checks. One line per criterion: PASS, FAIL or SKIP.
//
// Usage: slir_acceptance [criterion ...]   (default: all)
// Criterion 7 needs SLIR_NYC_CASES and SLIR_NYC_MOBILITY pointing at local
// date,value CSV files; without them it is skipped.

#include "slir/analysis.hpp"
#include "slir/compartmental.hpp"
#include "slir/io.hpp"
#include "slir/ode.hpp"
#include "slir/sampler.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

using namespace slir;
using Eigen::VectorXd;

namespace {

enum class Status { Pass, Fail, Skip };

struct Outcome {
  Status status = Status::Fail;
  std::string detail;
};

Outcome verdict(bool ok, const std::string& detail) { return {ok ? Status::Pass : Status::Fail, detail}; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

const ModelParams kSim1{5.0, 0.1, 0.05, 0.02, 50.0, 10.0};
const ModelParams kSim2{5.0, 0.1, 0.05, 0.1, 50.0, 10.0};
constexpr double kSimN = 1e4;
constexpr double kSimI0 = 1;
constexpr int kHorizon = 90;

mcmc::SamplerConfig desk_sampler(std::uint64_t seed) {
  mcmc::SamplerConfig c;
  c.n_chains = 4;
  c.n_iter = 2000;
  c.n_warmup = 1000;
  c.seed = seed;
  return c;
}

ObservedData synthetic(const ModelParams& truth, std::uint64_t seed) {
  Rng rng = make_stream(seed, 0);
  return generate_synthetic(truth, kSimN, kSimI0, kHorizon, rng);
}

// 1. Global error ratios under dt halving on x' = -x over [0, 1].
Outcome solver_orders() {
  using V = Eigen::Matrix<double, 1, 1>;
  const auto rhs = [](const V& x, double) -> V { return -x; };
  const V x0 = V::Constant(1.0);
  const double exact = std::exp(-1.0);
  struct Case {
    ode::Method method;
    double expected;
  };
  const Case cases[] = {{ode::Method::Euler, 2.0},
                        {ode::Method::Trapezoidal, 4.0},
                        {ode::Method::ModifiedEuler, 4.0},
                        {ode::Method::RK4, 16.0}};
  bool ok = true;
  std::ostringstream detail;
  for (const auto& c : cases) {
    auto error = [&](double dt) {
      const auto traj = ode::integrate(rhs, x0, {0.0, 1.0}, ode::SolverConfig::fixed(c.method, dt));
      return std::abs(traj.back()(0) - exact);
    };
    const double ratio = error(0.1) / error(0.05);
    const bool within = std::abs(ratio - c.expected) <= 0.3 * c.expected;
    ok = ok && within;
    detail << ode::to_string(c.method) << " " << fmt("%.3f", ratio) << " (" << c.expected << ") ";
  }
  return verdict(ok, detail.str());
}

// 2. Next-generation R0 for SIR and SLIR at the disease-free equilibrium.
Outcome ngm() {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> beta_dist(0.01, 3.0), gamma_dist(0.01, 1.0);
  const double N = 1e4;
  double sir_worst = 0;
  for (int k = 0; k < 100; ++k) {
    const double beta = beta_dist(rng), gamma = gamma_dist(rng);
    Eigen::MatrixXd A(1, 1), B(1, 1);
    A(0, 0) = beta * N / N;
    B(0, 0) = gamma;
    const double r0 = r0_next_generation(A, B);
    sir_worst = std::max(sir_worst, std::abs(r0 - beta / gamma) / (beta / gamma));
  }
  // SLIR from its full Jacobian at S = N: infected block is the I row/column.
  std::uniform_real_distribution<double> r0_dist(0.2, 8.0), rate(0.001, 0.5);
  double slir_worst = 0;
  for (int k = 0; k < 100; ++k) {
    const SlirParams p{r0_dist(rng), gamma_dist(rng), rate(rng), rate(rng)};
    const CompartmentState dfe(N, 0, 0, 0);
    const Eigen::Matrix4d J = slir_jacobian(dfe, p, N);
    Eigen::MatrixXd A(1, 1), B(1, 1);
    A(0, 0) = J(compartment::I, compartment::I) + p.gamma;  // new-infection part
    B(0, 0) = p.gamma;
    const double analytic = r0_next_generation(A, B);
    const double fast = slir_r0_next_generation(p, N, N);
    slir_worst = std::max({slir_worst, std::abs(analytic - p.R0) / p.R0, std::abs(fast - p.R0) / p.R0});
  }
  return verdict(sir_worst <= 1e-12 && slir_worst <= 1e-10,
                 "SIR max rel err " + fmt("%.2e", sir_worst) + ", SLIR max rel err " + fmt("%.2e", slir_worst));
}

// 3. Closed population over 90 days at the Simulation-1 truth.
Outcome conservation() {
  double worst = 0;
  std::ostringstream detail;
  const ode::SolverConfig solvers[] = {ode::SolverConfig::adaptive(1e-6, 1e-6),
                                       ode::SolverConfig::adaptive(1e-8, 1e-8),
                                       ode::SolverConfig::fixed(ode::Method::RK4, 0.1),
                                       ode::SolverConfig::fixed(ode::Method::Euler, 0.1)};
  for (const auto& s : solvers) {
    const auto traj = simulate_slir(kSim1.structural(), kSimN, kSimI0, kHorizon, s);
    for (const auto& x : traj.states) worst = std::max(worst, std::abs(x.sum() - kSimN) / kSimN);
  }
  return verdict(worst <= 1e-6, "max |S+L+I+R-N|/N over 4 solvers " + fmt("%.2e", worst));
}

// 4. Leapfrog reversibility, volume preservation and energy drift.
Outcome leapfrog_properties() {
  // Correlated quadratic target.
  Eigen::Matrix2d precision;
  precision << 2.0, -0.7, -0.7, 1.3;
  const auto grad = [&](const VectorXd& x) -> VectorXd { return -precision * x; };
  const VectorXd theta = (VectorXd(2) << 0.4, -1.1).finished();
  const VectorXd r = (VectorXd(2) << 0.9, 0.3).finished();

  const auto fwd = mcmc::leapfrog(grad, theta, r, 0.1, 25);
  const auto back = mcmc::leapfrog(grad, fwd.theta, -fwd.r, 0.1, 25);
  const double reversibility = std::max((back.theta - theta).cwiseAbs().maxCoeff(),
                                        (back.r + r).cwiseAbs().maxCoeff());

  // Jacobian of (theta, r) -> (theta', r') by central differences.
  Eigen::Matrix4d jac;
  const double h = 1e-6;
  VectorXd z(4);
  z << theta, r;
  for (int j = 0; j < 4; ++j) {
    VectorXd zp = z, zm = z;
    zp(j) += h;
    zm(j) -= h;
    const auto p = mcmc::leapfrog(grad, zp.head(2), zp.tail(2), 0.1, 25);
    const auto m = mcmc::leapfrog(grad, zm.head(2), zm.tail(2), 0.1, 25);
    VectorXd out_p(4), out_m(4);
    out_p << p.theta, p.r;
    out_m << m.theta, m.r;
    jac.col(j) = (out_p - out_m) / (2 * h);
  }
  const double det = jac.determinant();

  // Standard Gaussian, eps = 0.1, 100 steps, from 100 starts drawn from the
  // joint (theta, r) distribution. Leapfrog energy error oscillates with
  // period pi / eps steps; drift is the change between the energy averaged
  // over the first and over the last such period. A kick-free Euler update
  // of the same system serves as a non-symplectic control.
  const auto std_grad = [](const VectorXd& x) -> VectorXd { return -x; };
  const int n_steps = 100;
  const int window = static_cast<int>(std::lround(M_PI / 0.1));
  auto energy = [](const VectorXd& q, const VectorXd& p) { return mcmc::hamiltonian(-0.5 * q.squaredNorm(), p); };
  auto drift_of = [&](const std::vector<double>& H) {
    double first = 0, last = 0;
    for (int i = 0; i < window; ++i) {
      first += H[static_cast<std::size_t>(i)];
      last += H[H.size() - 1 - static_cast<std::size_t>(i)];
    }
    return std::abs(last - first) / window;
  };
  Rng rng = make_stream(4, 0);
  double drift = 0, oscillation = 0, euler_drift = 0;
  for (int k = 0; k < 100; ++k) {
    VectorXd q(2), p(2);
    for (int i = 0; i < 2; ++i) {
      q(i) = draw_normal(rng);
      p(i) = draw_normal(rng);
    }
    VectorXd qe = q, pe = p;
    std::vector<double> H{energy(q, p)}, He{energy(q, p)};
    VectorXd g = std_grad(q);
    for (int step = 0; step < n_steps; ++step) {
      const auto next = mcmc::leapfrog(std_grad, q, p, g, 0.1, 1);
      q = next.theta;
      p = next.r;
      g = next.grad;
      H.push_back(energy(q, p));
      oscillation = std::max(oscillation, std::abs(H.back() - H.front()));
      const VectorXd qn = qe + 0.1 * pe;
      pe = pe + 0.1 * std_grad(qe);
      qe = qn;
      He.push_back(energy(qe, pe));
    }
    drift = std::max(drift, drift_of(H));
    euler_drift = std::max(euler_drift, drift_of(He));
  }

  return verdict(reversibility < 1e-8 && std::abs(det - 1) <= 1e-6 && drift < 1e-3,
                 "reversibility " + fmt("%.2e", reversibility) + ", det-1 " + fmt("%.2e", det - 1) +
                     ", max energy drift " + fmt("%.2e", drift) + " (bounded oscillation up to " +
                     fmt("%.2e", oscillation) + "; Euler control drift " + fmt("%.2e", euler_drift) + ")");
}

// 5. NUTS on a 0.9-correlated 2-D Gaussian.
Outcome nuts_gaussian() {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.9, 0.9, 1.0;
  const Eigen::Matrix2d precision = cov.inverse();
  mcmc::TargetDensity target;
  target.dimension = 2;
  target.log_density = [&](const VectorXd& x) { return -0.5 * x.dot(precision * x); };
  target.gradient = [&](const VectorXd& x) -> VectorXd { return -precision * x; };
  mcmc::SamplerConfig config;
  config.n_chains = 4;
  config.n_iter = 3000;
  config.n_warmup = 1000;
  config.seed = 5;
  const auto chains = mcmc::run_chains(target, config);
  std::vector<Eigen::MatrixXd> draws;
  for (int c = 0; c < 4; ++c) draws.push_back(chains.post_warmup(c));
  const auto summary = mcmc::summarize(draws, {"x", "y"});

  Eigen::MatrixXd all(4 * chains.n_kept(), 2);
  for (int c = 0; c < 4; ++c) all.middleRows(c * chains.n_kept(), chains.n_kept()) = draws[static_cast<std::size_t>(c)];
  const Eigen::RowVector2d mean = all.colwise().mean();
  const Eigen::MatrixXd centered = all.rowwise() - mean;
  const Eigen::Matrix2d sample_cov = centered.transpose() * centered / static_cast<double>(all.rows() - 1);

  bool ok = true;
  std::ostringstream detail;
  for (int i = 0; i < 2; ++i) {
    const auto& s = summary[static_cast<std::size_t>(i)];
    const bool mean_ok = std::abs(s.mean) <= 3 * s.mcse;
    ok = ok && mean_ok && s.rhat < 1.01;
    detail << s.name << " mean " << fmt("%.3f", s.mean) << " (3 mcse " << fmt("%.3f", 3 * s.mcse) << ") rhat "
           << fmt("%.4f", s.rhat) << "; ";
  }
  double worst_cov = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) worst_cov = std::max(worst_cov, std::abs(sample_cov(i, j) - cov(i, j)) / cov(i, j));
  ok = ok && worst_cov <= 0.15;
  detail << "max cov rel err " << fmt("%.3f", worst_cov);
  return verdict(ok, detail.str());
}

// 6. Simulation recovery for both simulation scenarios.
Outcome simulation_recovery() {
  int misses = 0;
  double worst_rhat = 0;
  std::ostringstream detail;
  const std::pair<const char*, ModelParams> sims[] = {{"sim1", kSim1}, {"sim2", kSim2}};
  std::uint64_t seed = 101;
  for (const auto& [label, truth] : sims) {
    const ObservedData data = synthetic(truth, seed);
    FitConfig cfg;
    cfg.sampler = desk_sampler(seed);
    ++seed;
    const auto t0 = std::chrono::steady_clock::now();
    const FitResult fit = slir::fit(data, cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    detail << label << " (" << fmt("%.0f", secs) << "s):";
    const double truths[] = {truth.R0, truth.gamma, truth.a, truth.b};
    const char* names[] = {"R0", "gamma", "a", "b"};
    for (int k = 0; k < 4; ++k) {
      const auto& s = fit.parameter(names[k]);
      const bool covered = s.lower <= truths[k] && truths[k] <= s.upper;
      if (!covered) ++misses;
      detail << " " << names[k] << " " << fmt("%.4g", s.median) << " [" << fmt("%.4g", s.lower) << ","
             << fmt("%.4g", s.upper) << "]" << (covered ? "" : "*");
    }
    for (const auto& s : fit.summary) worst_rhat = std::max(worst_rhat, std::isnan(s.rhat) ? 99.0 : s.rhat);
    detail << "; ";
  }
  detail << "misses " << misses << "/8, max rhat " << fmt("%.4f", worst_rhat);
  return verdict(misses <= 1 && worst_rhat <= 1.05, detail.str());
}

std::optional<ObservedData> nyc_data() {
  const char* cases = std::getenv("SLIR_NYC_CASES");
  const char* mobility = std::getenv("SLIR_NYC_MOBILITY");
  if (!cases || !mobility || !*cases || !*mobility) return std::nullopt;
  std::vector<std::string> warnings;
  const auto m = io::load_mobility(mobility, io::MobilityFormat::PercentOfBaseline, io::GapPolicy::ForwardFill,
                                   warnings);
  const auto c = io::load_cases(cases, warnings);
  return io::align(m, c, io::parse_date("2020-03-08"), 8336817, 90);
}

// 7. NYC fit, only with local data.
Outcome nyc_fit() {
  const auto data = nyc_data();
  if (!data) return {Status::Skip, "SLIR_NYC_CASES / SLIR_NYC_MOBILITY not set; NYC data absent"};
  FitConfig cfg;
  cfg.sampler = desk_sampler(7);
  const FitResult fit = slir::fit(*data, cfg);
  double worst_rhat = 0;
  for (const auto& s : fit.summary) worst_rhat = std::max(worst_rhat, std::isnan(s.rhat) ? 99.0 : s.rhat);
  const double r0 = fit.parameter("R0").median;
  return verdict(worst_rhat < 1.1 && r0 >= 4.0 && r0 <= 6.5,
                 "R0 median " + fmt("%.3f", r0) + ", max rhat " + fmt("%.4f", worst_rhat));
}

// 8. Sensitivity sweep from the NYC posterior medians.
Outcome sensitivity() {
  const ModelParams base{5.13, 0.212, 0.115, 0.0215, 1.0, 1.0};
  const std::vector<double> targets{1.0, 0.8, 0.6, 0.4, 0.2};
  bool ok = true;
  std::ostringstream detail;
  for (double i0 : {1.0, 10.0, 100.0}) {
    const auto rows = sensitivity_sweep(base, 8336817, i0, kHorizon, targets);
    bool monotone = true;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      if (rows[k].error) ok = false;
      if (k > 0 && rows[k].attack_rate < rows[k - 1].attack_rate) monotone = false;
    }
    const bool brackets = rows[1].attack_rate < 0.10 && rows[3].attack_rate > 0.60;
    ok = ok && monotone && brackets;
    detail << "i0=" << i0 << ":";
    for (const auto& r : rows) detail << " " << fmt("%.3f", r.attack_rate);
    detail << "; ";
  }
  return verdict(ok, detail.str() + "(attack rate at declines 1.0,0.8,0.6,0.4,0.2)");
}

// 9. Forecast interval contraction at day 60.
Outcome forecast_contraction() {
  std::optional<ObservedData> data = nyc_data();
  const std::string source = data ? "NYC" : "Simulation-1 synthetic";
  if (!data) data = synthetic(kSim1, 909);
  double previous = std::numeric_limits<double>::infinity();
  bool ok = true;
  std::ostringstream detail;
  detail << source << ":";
  for (int train : {14, 21, 28}) {
    FitConfig cfg;
    cfg.sampler = desk_sampler(900 + static_cast<std::uint64_t>(train));
    const auto result = forecast(*data, train, data->days(), cfg);
    const double width = result.band.width_I(60);
    ok = ok && width < previous;
    previous = width;
    detail << " train " << train << " width " << fmt("%.1f", width);
  }
  return verdict(ok, detail.str());
}

// 10. SIR final size against z = 1 - exp(-2 z).
Outcome attack_rate_oracle() {
  const double N = 1e6, i0 = 1;
  const SlirParams p{2.0, 0.1, 0.0, 0.0};
  const auto traj = simulate_slir(p, N, i0, 3000, ode::SolverConfig::adaptive(1e-10, 1e-10));
  const double simulated = attack_rate(traj, N);
  double z = 0.5;
  for (int k = 0; k < 200; ++k) z = 1 - std::exp(-2 * z);
  const double diff = std::abs(simulated - z);
  return verdict(diff <= 1e-3, "simulated " + fmt("%.6f", simulated) + ", fixed point " + fmt("%.6f", z) +
                                   ", diff " + fmt("%.2e", diff));
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::pair<const char*, std::function<Outcome()>>> criteria{
      {1, {"solver convergence orders", solver_orders}},
      {2, {"next-generation R0", ngm}},
      {3, {"conservation", conservation}},
      {4, {"leapfrog properties", leapfrog_properties}},
      {5, {"NUTS correlated Gaussian", nuts_gaussian}},
      {6, {"simulation recovery", simulation_recovery}},
      {7, {"NYC fit", nyc_fit}},
      {8, {"sensitivity sweep", sensitivity}},
      {9, {"forecast contraction", forecast_contraction}},
      {10, {"attack-rate oracle", attack_rate_oracle}},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  if (selected.empty())
    for (const auto& [k, v] : criteria) selected.insert(k);

  int failures = 0;
  for (int k : selected) {
    const auto it = criteria.find(k);
    if (it == criteria.end()) {
      std::cout << "FAIL criterion " << k << ": unknown criterion" << std::endl;
      ++failures;
      continue;
    }
    Outcome outcome;
    try {
      outcome = it->second.second();
    } catch (const std::exception& e) {
      outcome = {Status::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = outcome.status == Status::Pass ? "PASS" : outcome.status == Status::Skip ? "SKIP" : "FAIL";
    if (outcome.status == Status::Fail) ++failures;
    std::cout << tag << " criterion " << k << " (" << it->second.first << "): " << outcome.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
