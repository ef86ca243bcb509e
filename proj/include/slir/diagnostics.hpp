#ifndef SLIR_DIAGNOSTICS_HPP
#define SLIR_DIAGNOSTICS_HPP

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace slir::mcmc {

class DiagnosticError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Empirical quantile with linear interpolation between order statistics
/// (R type 7). `p` in [0, 1].
double quantile(std::vector<double> values, double p);

/// Split-chain potential scale reduction factor sqrt(V / W).
/// Needs at least two chains of at least ten draws each.
double gelman_rubin(const std::vector<Eigen::VectorXd>& chains);

/// Multi-chain effective sample size from autocorrelations truncated by
/// Geyer's initial monotone positive sequence.
double effective_sample_size(const std::vector<Eigen::VectorXd>& chains);

struct ParameterSummary {
  std::string name;
  double mean = 0;
  double sd = 0;
  double median = 0;
  double lower = 0;  ///< 2.5% quantile
  double upper = 0;  ///< 97.5% quantile
  double rhat = 0;
  double ess = 0;
  double mcse = 0;  ///< sd / sqrt(ess)
};

/// Column p of each matrix is one parameter's post-warmup draws.
std::vector<ParameterSummary> summarize(const std::vector<Eigen::MatrixXd>& chains,
                                        const std::vector<std::string>& names);

}  // namespace slir::mcmc

#endif  // SLIR_DIAGNOSTICS_HPP
