#include "slir/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace slir::mcmc {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == neg_inf) return b;
  if (b == neg_inf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Eigen::VectorXd velocity(const Eigen::VectorXd& r, const Eigen::VectorXd& inv_metric) {
  return inv_metric.size() == 0 ? r : Eigen::VectorXd(inv_metric.cwiseProduct(r));
}

Eigen::VectorXd draw_momentum(Rng& rng, Eigen::Index d, const Eigen::VectorXd& inv_metric) {
  Eigen::VectorXd r(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    r(i) = draw_normal(rng);
    if (inv_metric.size() != 0) r(i) /= std::sqrt(inv_metric(i));
  }
  return r;
}

// Signed step size: negative eps integrates backwards in time.
LeapfrogResult leapfrog_signed(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                               const Eigen::VectorXd& theta, const Eigen::VectorXd& r,
                               const Eigen::VectorXd& grad_start, double eps, int n_steps,
                               const Eigen::VectorXd& inv_metric) {
  LeapfrogResult out{theta, r, grad_start, false};
  if (!grad_start.allFinite()) {
    out.divergent = true;
    return out;
  }
  for (int i = 0; i < n_steps; ++i) {
    out.r += (0.5 * eps) * out.grad;
    out.theta += eps * velocity(out.r, inv_metric);
    try {
      out.grad = grad(out.theta);
    } catch (const std::exception&) {
      out.divergent = true;
      return out;
    }
    if (out.grad.size() != theta.size() || !out.grad.allFinite()) {
      out.divergent = true;
      return out;
    }
    out.r += (0.5 * eps) * out.grad;
  }
  return out;
}

bool is_u_turn(const Eigen::VectorXd& theta_minus, const Eigen::VectorXd& r_minus,
               const Eigen::VectorXd& theta_plus, const Eigen::VectorXd& r_plus,
               const Eigen::VectorXd& inv_metric) {
  const Eigen::VectorXd span = theta_plus - theta_minus;
  return span.dot(velocity(r_minus, inv_metric)) < 0 || span.dot(velocity(r_plus, inv_metric)) < 0;
}

struct TreeEdge {
  PhasePoint point;
  Eigen::VectorXd r;
};

struct Subtree {
  TreeEdge minus, plus;
  PhasePoint proposal;
  double log_weight = neg_inf;
  double sum_accept = 0.0;
  int n_leapfrog = 0;
  bool stop = false;
  bool divergent = false;
};

class TreeBuilder {
public:
  TreeBuilder(const TargetDensity& target, double eps, double h0, const Eigen::VectorXd& inv_metric,
              double threshold, Rng& rng)
      : target_(target), eps_(eps), h0_(h0), inv_metric_(inv_metric), threshold_(threshold),
        rng_(rng) {}

  Subtree build(const TreeEdge& from, int direction, int depth) {
    if (depth == 0) return single_step(from, direction);
    Subtree first = build(from, direction, depth - 1);
    if (first.stop) return first;
    Subtree second = build(direction > 0 ? first.plus : first.minus, direction, depth - 1);

    Subtree merged = std::move(first);
    merged.n_leapfrog += second.n_leapfrog;
    merged.sum_accept += second.sum_accept;
    if (second.stop) {
      merged.stop = true;
      merged.divergent = second.divergent;
      return merged;
    }
    if (direction > 0)
      merged.plus = std::move(second.plus);
    else
      merged.minus = std::move(second.minus);
    const double total = log_sum_exp(merged.log_weight, second.log_weight);
    if (std::log(draw_uniform(rng_)) < second.log_weight - total)
      merged.proposal = std::move(second.proposal);
    merged.log_weight = total;
    merged.stop = is_u_turn(merged.minus.point.theta, merged.minus.r, merged.plus.point.theta,
                            merged.plus.r, inv_metric_);
    return merged;
  }

private:
  Subtree single_step(const TreeEdge& from, int direction) {
    Subtree t;
    t.n_leapfrog = 1;
    const LeapfrogResult lf = leapfrog_signed(target_.gradient, from.point.theta, from.r,
                                              from.point.grad, direction * eps_, 1, inv_metric_);
    if (lf.divergent) {
      t.stop = t.divergent = true;
      return t;
    }
    const double logp = target_.log_density(lf.theta);
    const double h = hamiltonian(logp, lf.r, inv_metric_);
    if (!std::isfinite(h) || h - h0_ > threshold_) {
      t.stop = t.divergent = true;
      return t;
    }
    t.log_weight = h0_ - h;
    t.sum_accept = std::min(1.0, std::exp(h0_ - h));
    t.minus.point = PhasePoint{lf.theta, logp, lf.grad};
    t.minus.r = lf.r;
    t.plus = t.minus;
    t.proposal = t.minus.point;
    return t;
  }

  const TargetDensity& target_;
  double eps_;
  double h0_;
  const Eigen::VectorXd& inv_metric_;
  double threshold_;
  Rng& rng_;
};

}  // namespace

void SamplerConfig::validate() const {
  if (n_chains < 1) throw SamplerError("n_chains must be at least 1");
  if (n_iter < 1) throw SamplerError("n_iter must be positive");
  if (n_warmup < 0 || n_warmup >= n_iter) throw SamplerError("n_warmup must be in [0, n_iter)");
  if (!(target_accept > 0 && target_accept < 1)) throw SamplerError("target_accept must be in (0, 1)");
  if (!(divergence_threshold > 0)) throw SamplerError("divergence threshold must be positive");
  if (init_attempts < 1) throw SamplerError("init_attempts must be positive");
  if (init_candidates < 1) throw SamplerError("init_candidates must be positive");
  if (initial_step_size < 0) throw SamplerError("initial step size must be non-negative");
  if (const auto* hmc = std::get_if<HmcConfig>(&algorithm)) {
    if (!(hmc->step_size > 0) || hmc->n_steps < 1) throw SamplerError("invalid HMC settings");
  } else if (const auto* nuts = std::get_if<NutsConfig>(&algorithm)) {
    if (nuts->max_tree_depth < 0) throw SamplerError("max_tree_depth must be non-negative");
  } else if (const auto* rw = std::get_if<RandomWalkConfig>(&algorithm)) {
    if (!(rw->scale > 0)) throw SamplerError("random-walk scale must be positive");
    if (!(rw->target_accept > 0 && rw->target_accept < 1))
      throw SamplerError("random-walk target acceptance must be in (0, 1)");
  }
}

Transition metropolis_step(const TargetDensity& target, const PhasePoint& current,
                           const Eigen::MatrixXd& proposal_cholesky, Rng& rng) {
  const Eigen::Index d = current.theta.size();
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z(i) = draw_normal(rng);
  const Eigen::VectorXd proposal = current.theta + proposal_cholesky * z;
  const double logp = target.log_density(proposal);

  Transition out;
  out.point = current;
  const double log_ratio = logp - current.log_density;
  out.accept_stat = std::isnan(log_ratio) ? 0.0 : std::min(1.0, std::exp(log_ratio));
  if (logp > neg_inf && std::log(draw_uniform(rng)) < log_ratio) {
    out.point = PhasePoint{proposal, logp, {}};
    out.accepted = true;
  }
  return out;
}

LeapfrogResult leapfrog(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                        const Eigen::VectorXd& theta, const Eigen::VectorXd& r,
                        const Eigen::VectorXd& grad_start, double eps, int n_steps,
                        const Eigen::VectorXd& inv_metric) {
  if (!(eps > 0)) throw SamplerError("leapfrog step size must be positive");
  if (n_steps < 1) throw SamplerError("leapfrog needs at least one step");
  if (theta.size() != r.size()) throw SamplerError("position and momentum sizes differ");
  return leapfrog_signed(grad, theta, r, grad_start, eps, n_steps, inv_metric);
}

LeapfrogResult leapfrog(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                        const Eigen::VectorXd& theta, const Eigen::VectorXd& r, double eps,
                        int n_steps) {
  return leapfrog(grad, theta, r, grad(theta), eps, n_steps);
}

double hamiltonian(double log_density, const Eigen::VectorXd& r,
                   const Eigen::VectorXd& inv_metric) {
  return -log_density + 0.5 * r.dot(velocity(r, inv_metric));
}

Transition hmc_step(const TargetDensity& target, const PhasePoint& current, double eps,
                    int n_steps, Rng& rng, const Eigen::VectorXd& inv_metric,
                    double divergence_threshold) {
  const Eigen::VectorXd r0 = draw_momentum(rng, current.theta.size(), inv_metric);
  const double h0 = hamiltonian(current.log_density, r0, inv_metric);
  const LeapfrogResult lf =
      leapfrog(target.gradient, current.theta, r0, current.grad, eps, n_steps, inv_metric);

  Transition out;
  out.point = current;
  out.n_leapfrog = n_steps;
  if (lf.divergent) {
    out.divergent = true;
    return out;
  }
  const double logp = target.log_density(lf.theta);
  const double h = hamiltonian(logp, lf.r, inv_metric);
  if (!std::isfinite(h) || h - h0 > divergence_threshold) {
    out.divergent = true;
    return out;
  }
  out.accept_stat = std::min(1.0, std::exp(h0 - h));
  if (std::log(draw_uniform(rng)) < h0 - h) {
    out.point = PhasePoint{lf.theta, logp, lf.grad};
    out.accepted = true;
  }
  return out;
}

Transition nuts_step(const TargetDensity& target, const PhasePoint& current, double eps,
                     int max_tree_depth, Rng& rng, const Eigen::VectorXd& inv_metric,
                     double divergence_threshold) {
  if (!(eps > 0)) throw SamplerError("NUTS step size must be positive");
  const Eigen::VectorXd r0 = draw_momentum(rng, current.theta.size(), inv_metric);
  const double h0 = hamiltonian(current.log_density, r0, inv_metric);
  TreeBuilder builder(target, eps, h0, inv_metric, divergence_threshold, rng);

  TreeEdge minus{current, r0};
  TreeEdge plus = minus;
  Transition out;
  out.point = current;
  double log_weight = 0.0;  // the initial point has weight exp(h0 - h0)
  double sum_accept = 0.0;
  int depth = 0;
  do {
    const int direction = draw_uniform(rng) < 0.5 ? -1 : 1;
    Subtree sub = builder.build(direction > 0 ? plus : minus, direction, depth);
    out.n_leapfrog += sub.n_leapfrog;
    sum_accept += sub.sum_accept;
    if (sub.divergent) out.divergent = true;
    if (sub.stop) break;
    if (direction > 0)
      plus = std::move(sub.plus);
    else
      minus = std::move(sub.minus);
    if (std::log(draw_uniform(rng)) < sub.log_weight - log_weight) {
      out.point = std::move(sub.proposal);
      out.accepted = true;
    }
    log_weight = log_sum_exp(log_weight, sub.log_weight);
    ++depth;
    if (is_u_turn(minus.point.theta, minus.r, plus.point.theta, plus.r, inv_metric)) break;
  } while (depth < max_tree_depth);

  out.tree_depth = depth;
  out.accept_stat = out.n_leapfrog > 0 ? sum_accept / out.n_leapfrog : 0.0;
  return out;
}

double find_reasonable_step_size(const TargetDensity& target, const PhasePoint& point, double eps,
                                 Rng& rng, const Eigen::VectorXd& inv_metric) {
  const double log_threshold = std::log(0.8);
  auto energy_change = [&](double step) {
    const Eigen::VectorXd r = draw_momentum(rng, point.theta.size(), inv_metric);
    const double h0 = hamiltonian(point.log_density, r, inv_metric);
    const LeapfrogResult lf =
        leapfrog_signed(target.gradient, point.theta, r, point.grad, step, 1, inv_metric);
    if (lf.divergent) return neg_inf;
    const double h = hamiltonian(target.log_density(lf.theta), lf.r, inv_metric);
    return std::isfinite(h) ? h0 - h : neg_inf;
  };

  double delta = energy_change(eps);
  const int direction = delta > log_threshold ? 1 : -1;
  for (int i = 0; i < 100; ++i) {
    const double next = direction == 1 ? 2 * eps : 0.5 * eps;
    if (next < 1e-10 || next > 1e7) break;
    eps = next;
    delta = energy_change(eps);
    if (direction == 1 && !(delta > log_threshold)) break;
    if (direction == -1 && delta > log_threshold) break;
  }
  return eps;
}

DualAveraging::DualAveraging(double initial_step_size, double target_accept, double gamma,
                             double t0, double kappa)
    : mu_(0), log_eps_(0), target_(target_accept), gamma_(gamma), t0_(t0), kappa_(kappa) {
  restart(initial_step_size);
}

void DualAveraging::restart(double step_size) {
  counter_ = 0;
  h_bar_ = 0;
  log_eps_bar_ = 0;
  log_eps_ = std::log(step_size);
  mu_ = std::log(10 * step_size);
}

double DualAveraging::update(double accept_stat) {
  if (std::isnan(accept_stat)) accept_stat = 0.0;
  accept_stat = std::min(1.0, accept_stat);
  counter_ += 1;
  const double eta = 1.0 / (counter_ + t0_);
  h_bar_ = (1 - eta) * h_bar_ + eta * (target_ - accept_stat);
  log_eps_ = mu_ - std::sqrt(counter_) / gamma_ * h_bar_;
  const double weight = std::pow(counter_, -kappa_);
  log_eps_bar_ = weight * log_eps_ + (1 - weight) * log_eps_bar_;
  return std::exp(log_eps_);
}

double DualAveraging::step_size() const { return std::exp(log_eps_); }

double DualAveraging::final_step_size() const {
  return counter_ > 0 ? std::exp(log_eps_bar_) : std::exp(log_eps_);
}

int ChainSet::dimension() const {
  return chains.empty() ? 0 : static_cast<int>(chains.front().draws.cols());
}

Eigen::MatrixXd ChainSet::post_warmup(int chain) const {
  const auto& c = chains.at(static_cast<std::size_t>(chain));
  return c.draws.bottomRows(n_kept());
}

std::vector<Eigen::VectorXd> ChainSet::parameter(int index) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.emplace_back(c.draws.col(index).tail(n_kept()));
  return out;
}

long ChainSet::divergences() const {
  long total = 0;
  for (const auto& c : chains)
    for (int i = n_warmup; i < n_iter; ++i) total += c.divergent[static_cast<std::size_t>(i)];
  return total;
}

double ChainSet::mean_accept_stat() const {
  double total = 0;
  long count = 0;
  for (const auto& c : chains)
    for (int i = n_warmup; i < n_iter; ++i) {
      total += c.accept_stat[static_cast<std::size_t>(i)];
      ++count;
    }
  return count ? total / static_cast<double>(count) : 0.0;
}

namespace {

// Ends of the metric adaptation windows inside warmup, as iteration indices
// after which the inverse metric is re-estimated.
struct MetricWindows {
  int first_start = 0;
  std::vector<int> ends;
};

MetricWindows metric_windows(int n_warmup) {
  MetricWindows w;
  if (n_warmup < 20) return w;
  int init_buffer = 75, term_buffer = 50, base_window = 25;
  if (init_buffer + term_buffer + base_window > n_warmup) {
    init_buffer = static_cast<int>(0.15 * n_warmup);
    term_buffer = static_cast<int>(0.1 * n_warmup);
    base_window = n_warmup - init_buffer - term_buffer;
  }
  const int last = n_warmup - term_buffer;
  w.first_start = init_buffer;
  int start = init_buffer, size = base_window;
  while (start < last) {
    int end = start + size;
    if (end + 2 * size > last) end = last;
    w.ends.push_back(end - 1);
    start = end;
    size *= 2;
  }
  return w;
}

Chain run_one_chain(const TargetDensity& base, const SamplerConfig& config, int index) {
  Rng rng = make_stream(config.seed, static_cast<std::uint64_t>(index));
  Chain chain;

  TargetDensity target = base;
  target.log_density = [&chain, &base](const Eigen::VectorXd& x) {
    ++chain.density_evaluations;
    return base.log_density(x);
  };
  target.gradient = [&chain, &base](const Eigen::VectorXd& x) {
    ++chain.gradient_evaluations;
    return base.gradient(x);
  };

  const bool needs_gradient = !std::holds_alternative<RandomWalkConfig>(config.algorithm);
  const int d = base.dimension;
  PhasePoint current;
  bool found = false;
  int candidates = 0;
  for (int attempt = 0; attempt < config.init_attempts && candidates < config.init_candidates; ++attempt) {
    Eigen::VectorXd theta(d);
    if (base.initialize) {
      theta = base.initialize(rng);
    } else {
      for (int i = 0; i < d; ++i) theta(i) = -2.0 + 4.0 * draw_uniform(rng);
    }
    const double logp = target.log_density(theta);
    if (!std::isfinite(logp)) continue;
    Eigen::VectorXd grad;
    if (needs_gradient) {
      try {
        grad = target.gradient(theta);
      } catch (const std::exception&) {
        continue;
      }
      if (!grad.allFinite()) continue;
    }
    ++candidates;
    if (!found || logp > current.log_density) current = PhasePoint{theta, logp, grad};
    found = true;
  }
  if (!found)
    throw SamplerError("chain " + std::to_string(index) + ": no initial point with finite density after " +
                       std::to_string(config.init_attempts) + " attempts");

  Eigen::VectorXd inv_metric = Eigen::VectorXd::Ones(d);
  double eps = 1.0;
  double adapt_target = config.target_accept;
  Eigen::MatrixXd rw_cholesky;
  if (const auto* rw = std::get_if<RandomWalkConfig>(&config.algorithm)) {
    eps = rw->scale;
    adapt_target = rw->target_accept;
    const Eigen::MatrixXd cov = rw->covariance ? *rw->covariance : Eigen::MatrixXd::Identity(d, d);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw SamplerError("proposal covariance is not positive definite");
    rw_cholesky = llt.matrixL();
  } else if (const auto* hmc = std::get_if<HmcConfig>(&config.algorithm)) {
    eps = hmc->step_size;
  } else {
    eps = config.initial_step_size > 0
              ? config.initial_step_size
              : find_reasonable_step_size(target, current, 1.0, rng, inv_metric);
  }
  DualAveraging adapter(eps, adapt_target);

  const MetricWindows windows =
      (config.adapt_diag_mass && needs_gradient) ? metric_windows(config.n_warmup) : MetricWindows{};
  const std::vector<int>& window_ends = windows.ends;
  std::size_t next_window = 0;
  int window_start = windows.first_start;
  Eigen::VectorXd window_mean = Eigen::VectorXd::Zero(d), window_m2 = Eigen::VectorXd::Zero(d);
  long window_count = 0;

  const auto n = static_cast<std::size_t>(config.n_iter);
  chain.draws.resize(config.n_iter, d);
  chain.log_density.reserve(n);
  chain.accept_stat.reserve(n);
  chain.step_size.reserve(n);
  chain.n_leapfrog.reserve(n);
  chain.tree_depth.reserve(n);
  chain.divergent.reserve(n);

  for (int iter = 0; iter < config.n_iter; ++iter) {
    Transition tr;
    if (std::holds_alternative<RandomWalkConfig>(config.algorithm)) {
      tr = metropolis_step(target, current, eps * rw_cholesky, rng);
    } else if (const auto* hmc = std::get_if<HmcConfig>(&config.algorithm)) {
      tr = hmc_step(target, current, eps, hmc->n_steps, rng, inv_metric, config.divergence_threshold);
    } else {
      tr = nuts_step(target, current, eps, std::get<NutsConfig>(config.algorithm).max_tree_depth, rng,
                     inv_metric, config.divergence_threshold);
    }
    current = std::move(tr.point);

    chain.draws.row(iter) = current.theta.transpose();
    chain.log_density.push_back(current.log_density);
    chain.accept_stat.push_back(tr.accept_stat);
    chain.step_size.push_back(eps);
    chain.n_leapfrog.push_back(tr.n_leapfrog);
    chain.tree_depth.push_back(tr.tree_depth);
    chain.divergent.push_back(tr.divergent ? 1 : 0);

    if (iter >= config.n_warmup || !config.adapt_step_size) continue;
    eps = adapter.update(tr.accept_stat);

    if (next_window < window_ends.size() && iter >= window_start) {
      ++window_count;
      const Eigen::VectorXd delta = current.theta - window_mean;
      window_mean += delta / static_cast<double>(window_count);
      window_m2 += delta.cwiseProduct(current.theta - window_mean);
      if (iter == window_ends[next_window]) {
        const double cnt = static_cast<double>(window_count);
        if (window_count > 1) {
          const Eigen::VectorXd var = window_m2 / (cnt - 1);
          inv_metric = (cnt / (cnt + 5.0)) * var.array() + 1e-3 * (5.0 / (cnt + 5.0));
        }
        window_mean.setZero();
        window_m2.setZero();
        window_count = 0;
        window_start = iter + 1;
        ++next_window;
        eps = find_reasonable_step_size(target, current, eps, rng, inv_metric);
        adapter.restart(eps);
      }
    }
    if (iter == config.n_warmup - 1) eps = adapter.final_step_size();
  }
  chain.inv_metric = inv_metric;
  return chain;
}

}  // namespace

ChainSet run_chains(const TargetDensity& target, const SamplerConfig& config) {
  config.validate();
  if (target.dimension < 1 || !target.log_density) throw SamplerError("target density is incomplete");
  if (!std::holds_alternative<RandomWalkConfig>(config.algorithm) && !target.gradient)
    throw SamplerError("gradient-based samplers need a gradient");

  ChainSet out;
  out.n_warmup = config.n_warmup;
  out.n_iter = config.n_iter;
  out.chains.resize(static_cast<std::size_t>(config.n_chains));
  std::vector<std::exception_ptr> errors(out.chains.size());

  auto work = [&](int c) {
    try {
      out.chains[static_cast<std::size_t>(c)] = run_one_chain(target, config, c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (config.parallel && config.n_chains > 1) {
    std::vector<std::thread> workers;
    workers.reserve(out.chains.size());
    for (int c = 0; c < config.n_chains; ++c) workers.emplace_back(work, c);
    for (auto& w : workers) w.join();
  } else {
    for (int c = 0; c < config.n_chains; ++c) work(c);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  const int from = out.n_kept() > 0 ? out.n_warmup : 0;
  bool all_stuck = true;
  for (const auto& c : out.chains) {
    double total = 0;
    for (int i = from; i < out.n_iter; ++i) total += c.accept_stat[static_cast<std::size_t>(i)];
    if (total / std::max(1, out.n_iter - from) >= 0.01) all_stuck = false;
  }
  if (all_stuck)
    throw SamplerError("all chains are stuck: mean acceptance below 1% after warmup");
  return out;
}

}  // namespace slir::mcmc
