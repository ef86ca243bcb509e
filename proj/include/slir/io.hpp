#ifndef SLIR_IO_HPP
#define SLIR_IO_HPP

#include "slir/analysis.hpp"
#include "slir/compartmental.hpp"
#include "slir/diagnostics.hpp"
#include "slir/stats_model.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace slir::io {

using Json = nlohmann::ordered_json;
using Date = std::chrono::sys_days;

/// Error carrying the machine-readable envelope {code, message, context}.
class IoError : public std::runtime_error {
public:
  IoError(std::string code, const std::string& message, Json context = Json::object())
      : std::runtime_error(message), code_(std::move(code)), context_(std::move(context)) {}

  const std::string& code() const { return code_; }
  const Json& context() const { return context_; }

private:
  std::string code_;
  Json context_;
};

Json error_envelope(const std::string& code, const std::string& message,
                    const Json& context = Json::object());

/// Strict YYYY-MM-DD.
Date parse_date(const std::string& text);
std::string format_date(Date d);

/// Daily series keyed by calendar date.
struct DatedSeries {
  std::vector<Date> dates;
  std::vector<double> values;

  std::size_t size() const { return dates.size(); }
  bool empty() const { return dates.empty(); }
  std::string range() const;
};

/// Reads a `date,value` CSV. Dates must be strictly increasing; gaps are
/// allowed here and handled by the loaders. Errors name the line number.
DatedSeries read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const DatedSeries& series);

enum class MobilityFormat { PercentOfBaseline, DeclineFraction };
enum class GapPolicy { ForwardFill, Error };

MobilityFormat parse_mobility_format(const std::string& name);
GapPolicy parse_gap_policy(const std::string& name);

/**
 * Mobility as the fraction adhering to mitigation. Percent-of-baseline
 * values v map to 1 - v/100; decline fractions are taken as is. Results are
 * clamped to [1e-6, 1 - 1e-6], with a warning when a value falls outside
 * [0, 1]. Missing calendar days are forward-filled (with a warning) or
 * rejected, depending on `gaps`.
 */
DatedSeries load_mobility(const std::filesystem::path& path, MobilityFormat format,
                          GapPolicy gaps, std::vector<std::string>& warnings);

/// Daily case counts: non-negative, rounded to integers with a warning.
/// Gaps are an error.
DatedSeries load_cases(const std::filesystem::path& path, std::vector<std::string>& warnings);

/// Drops days before `start`.
DatedSeries trim_to_start(const DatedSeries& series, Date start);

/**
 * Trims both series to `start` (and to `days` days when positive) and
 * requires identical date ranges. Day-0 cases become i0 unless
 * `i0_override` is positive.
 */
ObservedData align(const DatedSeries& mobility, const DatedSeries& cases, Date start, double N,
                   int days = 0, double i0_override = 0);

/// Long layout: day,compartment,value.
void write_trajectory_csv(std::ostream& out, const SlirTrajectory& trajectory);

/// day,y_L,y_I
void write_observations_csv(std::ostream& out, const ObservedData& data);

/// Long layout: day,series,median,lower,upper,observed,held_out.
void write_band_csv(std::ostream& out, const PredictiveBand& band, const ObservedData* truth = nullptr,
                    int train_days = -1);

/// Post-warmup draws in one table.
struct ChainTable {
  std::vector<int> chain;
  std::vector<int> iter;
  Eigen::MatrixXd params;  ///< Constrained, columns as ModelParams::names().
  std::vector<double> log_posterior;
  std::vector<int> divergent;

  std::size_t rows() const { return chain.size(); }
  int n_chains() const;
  /// Draws of each chain, in chain order.
  std::vector<Eigen::MatrixXd> by_chain() const;
  long divergences() const;
};

ChainTable chain_table(const FitResult& fit);

/// Columns: chain,iter,R0,gamma,a,b,phi1,phi2,log_posterior,divergent.
void write_chains_csv(std::ostream& out, const ChainTable& table);
ChainTable read_chains_csv(const std::filesystem::path& path);

Json summary_json(const std::vector<mcmc::ParameterSummary>& summary, const ChainTable& table);
Json fit_summary_json(const FitResult& fit);
/// Median of each parameter from a summary document.
ModelParams medians_from_summary(const Json& summary);

void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows);

/// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// Reproducibility record: tool version, command, seed, config and its hash,
/// output file list.
Json manifest(const std::string& command, const Json& config, std::uint64_t seed,
              const std::vector<std::string>& outputs);

void write_json(const std::filesystem::path& path, const Json& value);
Json read_json(const std::filesystem::path& path);

/// `explicit_dir` when non-empty, else $SLIR_OUTPUT_DIR, else "slir_output".
std::filesystem::path output_directory(const std::string& explicit_dir);

std::string version();

}  // namespace slir::io

#endif  // SLIR_IO_HPP
