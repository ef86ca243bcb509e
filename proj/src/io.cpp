#include "slir/io.hpp"

#include <algorithm>
#include <charconv>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace slir::io {

namespace {

constexpr double kMobilityFloor = 1e-6;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(trim(field));
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string location(const std::filesystem::path& path, int line) {
  return path.string() + ":" + std::to_string(line);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("file_not_found", "cannot open " + path.string(), {{"path", path.string()}});
  return in;
}

long long days_between(Date a, Date b) { return (b - a).count(); }

}  // namespace

Json error_envelope(const std::string& code, const std::string& message, const Json& context) {
  Json e;
  e["code"] = code;
  e["message"] = message;
  e["context"] = context;
  return Json{{"error", e}};
}

Date parse_date(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  int consumed = 0;
  if (text.size() != 10 ||
      std::sscanf(text.c_str(), "%4d-%2u-%2u%n", &y, &m, &d, &consumed) != 3 || consumed != 10)
    throw IoError("bad_date", "expected a YYYY-MM-DD date, got '" + text + "'", {{"value", text}});
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw IoError("bad_date", "not a calendar date: '" + text + "'", {{"value", text}});
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string DatedSeries::range() const {
  if (dates.empty()) return "(empty)";
  return format_date(dates.front()) + " .. " + format_date(dates.back()) + " (" +
         std::to_string(dates.size()) + " days)";
}

DatedSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  DatedSeries series;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto fields = split(content);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() != 2 || lower(fields[0]) != "date" || lower(fields[1]) != "value")
        throw IoError("bad_header", location(path, line_no) + ": expected header 'date,value'",
                      {{"path", path.string()}, {"line", line_no}});
      continue;
    }
    if (fields.size() != 2)
      throw IoError("bad_row", location(path, line_no) + ": expected 2 fields, got " + std::to_string(fields.size()),
                    {{"path", path.string()}, {"line", line_no}});
    Date date;
    try {
      date = parse_date(fields[0]);
    } catch (const IoError& e) {
      throw IoError("bad_date", location(path, line_no) + ": " + e.what(),
                    {{"path", path.string()}, {"line", line_no}});
    }
    if (!series.dates.empty() && date <= series.dates.back())
      throw IoError("non_monotone_dates",
                    location(path, line_no) + ": date " + fields[0] + " does not follow " +
                        format_date(series.dates.back()),
                    {{"path", path.string()}, {"line", line_no}});
    double value = std::numeric_limits<double>::quiet_NaN();
    if (!fields[1].empty() && !(parse_double(fields[1], value) && std::isfinite(value)))
      throw IoError("bad_value", location(path, line_no) + ": cannot parse value '" + fields[1] + "'",
                    {{"path", path.string()}, {"line", line_no}});
    series.dates.push_back(date);
    series.values.push_back(value);
  }
  if (!header_seen) throw IoError("empty_file", path.string() + " is empty", {{"path", path.string()}});
  if (series.empty()) throw IoError("empty_file", path.string() + " has no data rows", {{"path", path.string()}});
  return series;
}

void write_series_csv(const std::filesystem::path& path, const DatedSeries& series) {
  std::ofstream out(path);
  if (!out) throw IoError("write_failed", "cannot write " + path.string(), {{"path", path.string()}});
  out << "date,value\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    out << format_date(series.dates[i]) << ',';
    if (!std::isnan(series.values[i])) out << format_double(series.values[i]);
    out << '\n';
  }
}

MobilityFormat parse_mobility_format(const std::string& name) {
  if (name == "percent") return MobilityFormat::PercentOfBaseline;
  if (name == "fraction") return MobilityFormat::DeclineFraction;
  throw IoError("bad_option", "mobility format must be 'percent' or 'fraction', got '" + name + "'");
}

GapPolicy parse_gap_policy(const std::string& name) {
  if (name == "fill") return GapPolicy::ForwardFill;
  if (name == "error") return GapPolicy::Error;
  throw IoError("bad_option", "gap policy must be 'fill' or 'error', got '" + name + "'");
}

DatedSeries load_mobility(const std::filesystem::path& path, MobilityFormat format, GapPolicy gaps,
                          std::vector<std::string>& warnings) {
  const DatedSeries raw = read_series_csv(path);
  if (!std::isfinite(raw.values.front()))
    throw IoError("missing_value", path.string() + ": the first mobility value is missing",
                  {{"path", path.string()}});

  DatedSeries out;
  int filled = 0, clamped = 0;
  auto push = [&](Date d, double v) {
    out.dates.push_back(d);
    out.values.push_back(v);
  };
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0) {
      const long long gap = days_between(raw.dates[i - 1], raw.dates[i]) - 1;
      if (gap > 0) {
        if (gaps == GapPolicy::Error)
          throw IoError("date_gap",
                        path.string() + ": " + std::to_string(gap) + " missing day(s) after " +
                            format_date(raw.dates[i - 1]),
                        {{"path", path.string()}, {"after", format_date(raw.dates[i - 1])}});
        for (long long k = 1; k <= gap; ++k) push(raw.dates[i - 1] + std::chrono::days{k}, out.values.back());
        filled += static_cast<int>(gap);
      }
    }
    double v = raw.values[i];
    if (!std::isfinite(v)) {
      if (gaps == GapPolicy::Error)
        throw IoError("missing_value", path.string() + ": missing value on " + format_date(raw.dates[i]),
                      {{"path", path.string()}, {"date", format_date(raw.dates[i])}});
      push(raw.dates[i], out.values.back());
      ++filled;
      continue;
    }
    v = format == MobilityFormat::PercentOfBaseline ? 1.0 - v / 100.0 : v;
    if (v < 0 || v > 1) ++clamped;
    push(raw.dates[i], std::clamp(v, kMobilityFloor, 1.0 - kMobilityFloor));
  }
  if (filled > 0)
    warnings.push_back(path.string() + ": forward-filled " + std::to_string(filled) + " missing mobility day(s)");
  if (clamped > 0)
    warnings.push_back(path.string() + ": " + std::to_string(clamped) +
                       " mobility value(s) outside [0, 1] after transformation were clamped");
  return out;
}

DatedSeries load_cases(const std::filesystem::path& path, std::vector<std::string>& warnings) {
  const DatedSeries raw = read_series_csv(path);
  int rounded = 0;
  DatedSeries out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (i > 0 && days_between(raw.dates[i - 1], raw.dates[i]) != 1)
      throw IoError("date_gap", path.string() + ": case dates skip from " + format_date(raw.dates[i - 1]) + " to " +
                                    format_date(raw.dates[i]),
                    {{"path", path.string()}, {"after", format_date(raw.dates[i - 1])}});
    const double v = raw.values[i];
    if (!std::isfinite(v))
      throw IoError("missing_value", path.string() + ": missing case count on " + format_date(raw.dates[i]),
                    {{"path", path.string()}, {"date", format_date(raw.dates[i])}});
    if (v < 0)
      throw IoError("negative_count", path.string() + ": negative case count on " + format_date(raw.dates[i]),
                    {{"path", path.string()}, {"date", format_date(raw.dates[i])}});
    const double r = std::round(v);
    if (r != v) ++rounded;
    out.dates.push_back(raw.dates[i]);
    out.values.push_back(r);
  }
  if (rounded > 0)
    warnings.push_back(path.string() + ": rounded " + std::to_string(rounded) + " non-integer case count(s)");
  return out;
}

DatedSeries trim_to_start(const DatedSeries& series, Date start) {
  DatedSeries out;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series.dates[i] < start) continue;
    out.dates.push_back(series.dates[i]);
    out.values.push_back(series.values[i]);
  }
  return out;
}

ObservedData align(const DatedSeries& mobility, const DatedSeries& cases, Date start, double N, int days,
                   double i0_override) {
  if (!(N > 0)) throw IoError("bad_population", "population must be positive");
  DatedSeries m = trim_to_start(mobility, start), c = trim_to_start(cases, start);
  auto cut = [days](DatedSeries& s) {
    if (days > 0 && s.size() > static_cast<std::size_t>(days)) {
      s.dates.resize(static_cast<std::size_t>(days));
      s.values.resize(static_cast<std::size_t>(days));
    }
  };
  cut(m);
  cut(c);
  const Json ranges{{"mobility", m.range()}, {"cases", c.range()}, {"start", format_date(start)}};
  if (m.empty() || c.empty() || m.dates.front() != start || c.dates.front() != start)
    throw IoError("alignment", "both series must cover the start date " + format_date(start) + "; mobility " +
                                   m.range() + ", cases " + c.range(),
                  ranges);
  if (m.dates != c.dates)
    throw IoError("alignment", "mobility and case series cover different days after trimming; mobility " +
                                   m.range() + ", cases " + c.range(),
                  ranges);

  ObservedData data;
  data.N = N;
  data.t0_label = format_date(start);
  data.y_L = m.values;
  for (double v : c.values) data.y_I.push_back(static_cast<long long>(v));
  data.i0 = i0_override > 0 ? i0_override : c.values.front();
  if (!(data.i0 > 0))
    throw IoError("bad_initial_cases", "the day-0 case count is zero; pass an explicit i0",
                  {{"start", format_date(start)}});
  data.validate();
  return data;
}

void write_trajectory_csv(std::ostream& out, const SlirTrajectory& trajectory) {
  static const char* names[] = {"S", "L", "I", "R"};
  out << "day,compartment,value\n";
  for (std::size_t t = 0; t < trajectory.size(); ++t)
    for (int k = 0; k < 4; ++k)
      out << format_double(trajectory.times[t]) << ',' << names[k] << ',' << format_double(trajectory.states[t](k))
          << '\n';
}

void write_observations_csv(std::ostream& out, const ObservedData& data) {
  out << "day,y_L,y_I\n";
  for (int t = 0; t < data.days(); ++t)
    out << t << ',' << format_double(data.y_L[static_cast<std::size_t>(t)]) << ','
        << data.y_I[static_cast<std::size_t>(t)] << '\n';
}

void write_band_csv(std::ostream& out, const PredictiveBand& band, const ObservedData* truth, int train_days) {
  out << "day,series,median,lower,upper,observed,held_out\n";
  auto row = [&](int t, const char* series, double med, double lo, double hi, double observed, bool have) {
    out << t << ',' << series << ',' << format_double(med) << ',' << format_double(lo) << ',' << format_double(hi)
        << ',';
    if (have) out << format_double(observed);
    out << ',' << (train_days >= 0 && t >= train_days ? 1 : 0) << '\n';
  };
  for (int t = 0; t < band.days(); ++t) {
    const auto i = static_cast<std::size_t>(t);
    const bool have = truth && t < truth->days();
    row(t, "y_L", band.median_L[i], band.lower_L[i], band.upper_L[i], have ? truth->y_L[i] : 0.0,
        have && t > 0 && std::isfinite(truth->y_L[i]));
    row(t, "y_I", band.median_I[i], band.lower_I[i], band.upper_I[i],
        have ? static_cast<double>(truth->y_I[i]) : 0.0, have && truth->y_I[i] >= 0);
  }
}

int ChainTable::n_chains() const {
  return chain.empty() ? 0 : *std::max_element(chain.begin(), chain.end()) + 1;
}

std::vector<Eigen::MatrixXd> ChainTable::by_chain() const {
  std::vector<Eigen::MatrixXd> out;
  for (int c = 0; c < n_chains(); ++c) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < rows(); ++i)
      if (chain[i] == c) idx.push_back(static_cast<Eigen::Index>(i));
    Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()), params.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) m.row(static_cast<Eigen::Index>(k)) = params.row(idx[k]);
    out.push_back(std::move(m));
  }
  return out;
}

long ChainTable::divergences() const {
  return static_cast<long>(std::count(divergent.begin(), divergent.end(), 1));
}

ChainTable chain_table(const FitResult& fit) {
  ChainTable table;
  const auto& cs = fit.chains;
  const int kept = cs.n_kept();
  table.params.resize(static_cast<Eigen::Index>(cs.chains.size()) * kept, ModelParams::size);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < cs.chains.size(); ++c) {
    for (int k = 0; k < kept; ++k, ++row) {
      const auto it = static_cast<std::size_t>(cs.n_warmup + k);
      table.chain.push_back(static_cast<int>(c));
      table.iter.push_back(cs.n_warmup + k);
      table.params.row(row) = fit.constrained[c].row(k);
      table.log_posterior.push_back(cs.chains[c].log_density[it]);
      table.divergent.push_back(cs.chains[c].divergent[it] ? 1 : 0);
    }
  }
  return table;
}

void write_chains_csv(std::ostream& out, const ChainTable& table) {
  out << "chain,iter";
  for (const auto& n : ModelParams::names()) out << ',' << n;
  out << ",log_posterior,divergent\n";
  for (std::size_t i = 0; i < table.rows(); ++i) {
    out << table.chain[i] << ',' << table.iter[i];
    for (Eigen::Index j = 0; j < table.params.cols(); ++j)
      out << ',' << format_double(table.params(static_cast<Eigen::Index>(i), j));
    out << ',' << format_double(table.log_posterior[i]) << ',' << table.divergent[i] << '\n';
  }
}

ChainTable read_chains_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  int line_no = 0;
  std::vector<std::string> expected{"chain", "iter"};
  for (const auto& n : ModelParams::names()) expected.push_back(n);
  expected.push_back("log_posterior");
  expected.push_back("divergent");

  std::vector<std::vector<double>> rows;
  ChainTable table;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto fields = split(content);
    if (!header_seen) {
      if (fields != expected)
        throw IoError("bad_header", location(path, line_no) + ": unexpected chains header",
                      {{"path", path.string()}, {"line", line_no}});
      header_seen = true;
      continue;
    }
    if (fields.size() != expected.size())
      throw IoError("bad_row", location(path, line_no) + ": expected " + std::to_string(expected.size()) + " fields",
                    {{"path", path.string()}, {"line", line_no}});
    std::vector<double> values(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k) {
      const bool ok = parse_double(fields[k], values[k]) || (k == fields.size() - 2 && lower(fields[k]) == "-inf");
      if (!ok)
        throw IoError("bad_value", location(path, line_no) + ": cannot parse '" + fields[k] + "'",
                      {{"path", path.string()}, {"line", line_no}});
    }
    if (values[0] < 0 || values[0] != std::floor(values[0]))
      throw IoError("bad_value", location(path, line_no) + ": chain index must be a non-negative integer",
                    {{"path", path.string()}, {"line", line_no}});
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw IoError("empty_file", path.string() + " has no draws", {{"path", path.string()}});
  table.params.resize(static_cast<Eigen::Index>(rows.size()), ModelParams::size);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& v = rows[i];
    table.chain.push_back(static_cast<int>(v[0]));
    table.iter.push_back(static_cast<int>(v[1]));
    for (int j = 0; j < ModelParams::size; ++j) table.params(static_cast<Eigen::Index>(i), j) = v[2 + j];
    table.log_posterior.push_back(v[2 + ModelParams::size]);
    table.divergent.push_back(v[3 + ModelParams::size] != 0 ? 1 : 0);
  }
  return table;
}

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json summary_json(const std::vector<mcmc::ParameterSummary>& summary, const ChainTable& table) {
  Json doc;
  doc["schema_version"] = 1;
  doc["n_chains"] = table.n_chains();
  doc["draws_per_chain"] = table.n_chains() > 0 ? static_cast<int>(table.rows()) / table.n_chains() : 0;
  doc["divergences"] = table.divergences();
  Json params = Json::array();
  for (const auto& s : summary) {
    params.push_back({{"name", s.name},
                      {"median", s.median},
                      {"lower_95", s.lower},
                      {"upper_95", s.upper},
                      {"mean", s.mean},
                      {"sd", s.sd},
                      {"rhat", number_or_null(s.rhat)},
                      {"ess", number_or_null(s.ess)}});
  }
  doc["parameters"] = params;
  return doc;
}

Json fit_summary_json(const FitResult& fit) {
  Json doc = summary_json(fit.summary, chain_table(fit));
  doc["ode_failures"] = fit.ode_failures;
  doc["mean_accept_stat"] = fit.chains.mean_accept_stat();
  return doc;
}

ModelParams medians_from_summary(const Json& summary) {
  if (!summary.contains("parameters") || !summary["parameters"].is_array())
    throw IoError("bad_summary", "summary JSON has no 'parameters' array");
  Eigen::VectorXd v = Eigen::VectorXd::Constant(ModelParams::size, std::numeric_limits<double>::quiet_NaN());
  const auto& names = ModelParams::names();
  for (const auto& p : summary["parameters"]) {
    const auto it = std::find(names.begin(), names.end(), p.value("name", std::string()));
    if (it != names.end() && p.contains("median") && p["median"].is_number())
      v(std::distance(names.begin(), it)) = p["median"].get<double>();
  }
  for (int j = 0; j < ModelParams::size; ++j)
    if (!std::isfinite(v(j)))
      throw IoError("bad_summary", "summary JSON lacks a median for " + names[static_cast<std::size_t>(j)]);
  return ModelParams::from_vector(v);
}

void write_sensitivity_csv(std::ostream& out, const std::vector<SensitivityRow>& rows) {
  out << "target_decline,peak_decline,a,attack_rate,error\n";
  for (const auto& r : rows) {
    out << format_double(r.target_decline) << ',';
    if (!r.error) out << format_double(r.peak_decline) << ',' << format_double(r.a) << ',' << format_double(r.attack_rate);
    else out << ",,";
    out << ',';
    if (r.error) {
      std::string msg = *r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      out << msg;
    }
    out << '\n';
  }
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string version() { return "0.1.0"; }

Json manifest(const std::string& command, const Json& config, std::uint64_t seed,
              const std::vector<std::string>& outputs) {
  Json m;
  m["tool"] = "slir";
  m["version"] = version();
  m["command"] = command;
  m["seed"] = seed;
  m["config_hash"] = fnv1a_hex(config.dump());
  m["config"] = config;
  m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
  m["outputs"] = outputs;
  return m;
}

void write_json(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path);
  if (!out) throw IoError("write_failed", "cannot write " + path.string(), {{"path", path.string()}});
  out << value.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError("bad_json", path.string() + ": " + e.what(), {{"path", path.string()}});
  }
}

std::filesystem::path output_directory(const std::string& explicit_dir) {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("SLIR_OUTPUT_DIR"); env && *env) return env;
  return "slir_output";
}

}  // namespace slir::io
