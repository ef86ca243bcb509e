// Command-line front end: simulate, fit, forecast, sensitivity, r0, diagnose.

#include "slir/analysis.hpp"
#include "slir/compartmental.hpp"
#include "slir/io.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using slir::io::IoError;
using slir::io::Json;

namespace {

struct ModelOptions {
  double R0 = 5.0, gamma = 0.1, a = 0.05, b = 0.02, phi1 = 50.0, phi2 = 10.0;

  void add(CLI::App* app) {
    app->add_option("--R0", R0, "Basic reproduction number")->capture_default_str();
    app->add_option("--gamma", gamma, "Removal rate (1/day)")->capture_default_str();
    app->add_option("--a", a, "S -> L lockdown inflow rate (1/day)")->capture_default_str();
    app->add_option("--b", b, "L -> S reintroduction rate (1/day)")->capture_default_str();
    app->add_option("--phi1", phi1, "Beta dispersion of mobility")->capture_default_str();
    app->add_option("--phi2", phi2, "Negative binomial dispersion of cases")->capture_default_str();
  }
  slir::ModelParams params() const { return {R0, gamma, a, b, phi1, phi2}; }
};

struct SolverOptions {
  std::string method = "adaptive45";
  double dt = 0.01;
  double rtol = 1e-6, atol = 1e-6;

  void add(CLI::App* app) {
    app->add_option("--solver", method, "ODE method (euler, trapezoidal, modified_euler, rk2, rk4, adaptive45)")
        ->capture_default_str();
    app->add_option("--dt", dt, "Fixed step size (days)")->capture_default_str();
    app->add_option("--rtol", rtol, "Adaptive relative tolerance")->capture_default_str();
    app->add_option("--atol", atol, "Adaptive absolute tolerance")->capture_default_str();
  }
  slir::ode::SolverConfig config() const {
    const auto m = slir::ode::parse_method(method);
    auto c = m == slir::ode::Method::Adaptive45 ? slir::ode::SolverConfig::adaptive(rtol, atol)
                                                 : slir::ode::SolverConfig::fixed(m, dt);
    c.validate();
    return c;
  }
};

struct DataOptions {
  std::string cases, mobility;
  std::string start = "2020-03-08";
  double N = 8336817;
  double i0 = 0;
  int days = 0;
  std::string format = "percent";
  std::string gaps = "fill";

  void add(CLI::App* app) {
    app->add_option("--cases", cases, "Case counts CSV (date,value)")->required()->check(CLI::ExistingFile);
    app->add_option("--mobility", mobility, "Mobility CSV (date,value)")->required()->check(CLI::ExistingFile);
    app->add_option("--start-date", start, "Day 0 (YYYY-MM-DD)")->capture_default_str();
    app->add_option("--N", N, "Population size")->capture_default_str();
    app->add_option("--i0", i0, "Initial cases; 0 takes the day-0 count")->capture_default_str();
    app->add_option("--days", days, "Keep only the first DAYS days; 0 keeps all")->capture_default_str();
    app->add_option("--mobility-format", format, "percent (100 = baseline) or fraction (decline)")
        ->capture_default_str();
    app->add_option("--gaps", gaps, "Missing mobility days: fill (forward) or error")->capture_default_str();
  }

  slir::ObservedData load() const {
    std::vector<std::string> warnings;
    const auto m = slir::io::load_mobility(mobility, slir::io::parse_mobility_format(format),
                                           slir::io::parse_gap_policy(gaps), warnings);
    const auto c = slir::io::load_cases(cases, warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    return slir::io::align(m, c, slir::io::parse_date(start), N, days, i0);
  }
};

struct SamplerOptions {
  int chains = 4, iter = 10000, warmup = 5000;
  std::uint64_t seed = 20200308;
  std::string algorithm = "nuts";
  int max_depth = 10;
  double target_accept = 0.8;
  double step_size = 0.0;
  int hmc_steps = 10;
  int init_candidates = 1;
  bool adapt_mass = false;
  bool serial = false;

  void add(CLI::App* app) {
    app->add_option("--chains", chains, "Number of chains")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--iter", iter, "Iterations per chain, warmup included")->capture_default_str();
    app->add_option("--warmup", warmup, "Warmup iterations per chain")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--algorithm", algorithm, "nuts, hmc or rw")->capture_default_str();
    app->add_option("--max-depth", max_depth, "NUTS maximum tree depth")->capture_default_str();
    app->add_option("--target-accept", target_accept, "Warmup acceptance target")->capture_default_str();
    app->add_option("--step-size", step_size, "Initial step size; 0 picks one heuristically")
        ->capture_default_str();
    app->add_option("--hmc-steps", hmc_steps, "Leapfrog steps per HMC transition")->capture_default_str();
    app->add_option("--init-candidates", init_candidates, "Prior draws per chain; the best one starts the chain")
        ->capture_default_str();
    app->add_flag("--adapt-mass", adapt_mass, "Adapt a diagonal mass matrix during warmup");
    app->add_flag("--serial", serial, "Run chains one after another");
  }

  slir::mcmc::SamplerConfig config() const {
    slir::mcmc::SamplerConfig c;
    c.init_candidates = init_candidates;
    c.n_chains = chains;
    c.n_iter = iter;
    c.n_warmup = warmup;
    c.seed = seed;
    c.target_accept = target_accept;
    c.initial_step_size = step_size;
    c.adapt_diag_mass = adapt_mass;
    c.parallel = !serial;
    if (algorithm == "nuts") c.algorithm = slir::mcmc::NutsConfig{max_depth};
    else if (algorithm == "hmc") c.algorithm = slir::mcmc::HmcConfig{step_size > 0 ? step_size : 0.1, hmc_steps};
    else if (algorithm == "rw") c.algorithm = slir::mcmc::RandomWalkConfig{};
    else throw IoError("bad_option", "algorithm must be nuts, hmc or rw, got '" + algorithm + "'");
    c.validate();
    return c;
  }
};

// Every option of a subcommand as it was resolved, for the manifest.
Json resolved_config(const CLI::App* app) {
  Json cfg = Json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name.empty() || name == "--help" || name == "-h" || name == "--config") continue;
    std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (key == "out" || key == "help" || key == "config") continue;
    if (opt->get_type_size() == 0) {
      cfg[key] = opt->count() > 0;
    } else if (opt->count() > 0) {
      cfg[key] = opt->as<std::string>();
    } else {
      cfg[key] = opt->get_default_str();
    }
  }
  return cfg;
}

fs::path prepare_output(const std::string& dir) {
  const fs::path out = slir::io::output_directory(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("write_failed", "cannot create output directory " + out.string(), {{"path", out.string()}});
  return out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("write_failed", "cannot write " + path.string(), {{"path", path.string()}});
  return f;
}

void finish(const fs::path& dir, const std::string& command, const CLI::App* app, std::uint64_t seed,
            const std::vector<std::string>& outputs, const Json& result = nullptr) {
  std::vector<std::string> all = outputs;
  all.push_back("manifest.json");
  slir::io::write_json(dir / "manifest.json", slir::io::manifest(command, resolved_config(app), seed, all));
  Json report{{"status", "ok"}, {"command", command}, {"output_dir", dir.string()}, {"files", all}};
  if (!result.is_null()) report["result"] = result;
  std::cout << report.dump(2) << '\n';
}

std::vector<slir::ModelParams> prior_draws(std::uint64_t seed, int n) {
  slir::Rng rng = slir::make_stream(seed, 0x5052494FULL);
  std::vector<slir::ModelParams> draws;
  for (int i = 0; i < n; ++i) draws.push_back(slir::sample_prior(rng));
  return draws;
}

// Rewrites `--config file.json` into explicit flags placed before the
// user's own, so command-line values win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] != "--config") continue;
    if (i + 1 >= args.size()) throw IoError("bad_option", "--config needs a file");
    const Json cfg = slir::io::read_json(args[i + 1]);
    if (!cfg.is_object()) throw IoError("bad_config", "config file must hold a JSON object");
    std::vector<std::string> injected;
    for (const auto& [key, value] : cfg.items()) {
      const std::string flag = "--" + key;
      if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
      if (value.is_boolean()) {
        if (value.get<bool>()) injected.push_back(flag);
        continue;
      }
      injected.push_back(flag);
      injected.push_back(value.is_string() ? value.get<std::string>() : value.dump());
    }
    args.erase(args.begin() + static_cast<long>(i), args.begin() + static_cast<long>(i) + 2);
    // The subcommand name must stay first.
    args.insert(args.begin() + (args.empty() ? 0 : 1), injected.begin(), injected.end());
    break;
  }
  std::reverse(args.begin(), args.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SLIR epidemic model calibration"};
  app.require_subcommand(1);
  app.set_version_flag("--version", slir::io::version());
  std::string out_dir, config_path;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--out", out_dir, "Output directory (default: $SLIR_OUTPUT_DIR or ./slir_output)");
    sub->add_option("--config", config_path, "JSON file of option values");
  };

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Simulate the SLIR model and draw synthetic observations");
  ModelOptions sim_model;
  SolverOptions sim_solver;
  sim_solver.rtol = sim_solver.atol = 1e-8;
  double sim_N = 1e4, sim_i0 = 1;
  int sim_horizon = 90;
  std::uint64_t sim_seed = 20200308;
  std::string sim_start = "2020-03-08";
  sim_model.add(simulate);
  sim_solver.add(simulate);
  simulate->add_option("--N", sim_N, "Population size")->capture_default_str();
  simulate->add_option("--i0", sim_i0, "Initial infectious count")->capture_default_str();
  simulate->add_option("--horizon", sim_horizon, "Last simulated day")->capture_default_str();
  simulate->add_option("--seed", sim_seed, "Random seed")->capture_default_str();
  simulate->add_option("--start-date", sim_start, "Calendar date of day 0 in the series files")
      ->capture_default_str();
  add_common(simulate);

  // fit
  auto* fit = app.add_subcommand("fit", "Fit the hierarchical model to case and mobility data");
  DataOptions fit_data;
  SamplerOptions fit_sampler;
  SolverOptions fit_solver;
  bool fit_no_bands = false;
  fit_data.add(fit);
  fit_sampler.add(fit);
  fit_solver.add(fit);
  fit->add_flag("--no-bands", fit_no_bands, "Skip the prior and posterior predictive bands");
  add_common(fit);

  // forecast
  auto* forecast = app.add_subcommand("forecast", "Fit a leading window and forecast the rest");
  DataOptions fc_data;
  SamplerOptions fc_sampler;
  SolverOptions fc_solver;
  int fc_train = 14, fc_total = 0;
  fc_data.add(forecast);
  fc_sampler.add(forecast);
  fc_solver.add(forecast);
  forecast->add_option("--train-days", fc_train, "Days used for fitting")->capture_default_str();
  forecast->add_option("--total-days", fc_total, "Forecast length in days; 0 uses all data days")
      ->capture_default_str();
  add_common(forecast);

  // sensitivity
  auto* sensitivity = app.add_subcommand("sensitivity", "Attack rate under hypothetical peak mobility declines");
  ModelOptions sens_model;
  sens_model.R0 = 5.13;
  sens_model.gamma = 0.212;
  sens_model.a = 0.115;
  sens_model.b = 0.0215;
  std::string sens_summary, sens_targets = "1.0,0.8,0.6,0.4,0.2";
  double sens_N = 8336817, sens_i0 = 1;
  int sens_horizon = 90;
  sens_model.add(sensitivity);
  sensitivity->add_option("--summary", sens_summary, "Fit summary JSON; its medians replace the model options")
      ->check(CLI::ExistingFile);
  sensitivity->add_option("--targets", sens_targets, "Comma-separated peak declines in (0, 1]")
      ->capture_default_str();
  sensitivity->add_option("--N", sens_N, "Population size")->capture_default_str();
  sensitivity->add_option("--i0", sens_i0, "Initial infectious count")->capture_default_str();
  sensitivity->add_option("--horizon", sens_horizon, "Day at which the attack rate is read")->capture_default_str();
  add_common(sensitivity);

  // r0
  auto* r0 = app.add_subcommand("r0", "Next-generation-matrix reproduction number");
  std::string r0_model = "slir", r0_point = "dfe";
  double r0_beta = 0.5, r0_N = 1e4;
  ModelOptions r0_params;
  r0->add_option("--model", r0_model, "sir or slir")->capture_default_str();
  r0->add_option("--beta", r0_beta, "SIR transmission rate")->capture_default_str();
  r0->add_option("--N", r0_N, "Population size")->capture_default_str();
  r0->add_option("--at", r0_point, "Linearisation point for SLIR: dfe (S = N) or mitigation")
      ->capture_default_str();
  r0_params.add(r0);
  add_common(r0);

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "R-hat, ESS and divergences from a chains CSV");
  std::string diag_chains;
  diagnose->add_option("chains", diag_chains, "Chains CSV written by fit")->required()->check(CLI::ExistingFile);
  add_common(diagnose);

  try {
    app.allow_config_extras(false);
    std::vector<std::string> args = expand_config(argc, argv);
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << slir::io::error_envelope("usage", e.what()).dump(2) << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << slir::io::error_envelope(e.code(), e.what(), e.context()).dump(2) << '\n';
    return 2;
  }

  try {
    if (simulate->parsed()) {
      const fs::path dir = prepare_output(out_dir);
      const slir::ModelParams p = sim_model.params();
      const auto solver = sim_solver.config();
      const auto traj = slir::simulate_slir(p.structural(), sim_N, sim_i0, sim_horizon, solver);
      slir::Rng rng = slir::make_stream(sim_seed, 0);
      const auto data = slir::generate_synthetic(p, sim_N, sim_i0, sim_horizon, rng, solver);
      {
        auto f = open_output(dir / "trajectory.csv");
        slir::io::write_trajectory_csv(f, traj);
      }
      {
        auto f = open_output(dir / "synthetic.csv");
        slir::io::write_observations_csv(f, data);
      }
      const slir::io::Date start = slir::io::parse_date(sim_start);
      slir::io::DatedSeries mobility, cases;
      for (int t = 0; t < data.days(); ++t) {
        const auto d = start + std::chrono::days{t};
        mobility.dates.push_back(d);
        mobility.values.push_back(100.0 * (1.0 - data.y_L[static_cast<std::size_t>(t)]));
        cases.dates.push_back(d);
        cases.values.push_back(static_cast<double>(data.y_I[static_cast<std::size_t>(t)]));
      }
      slir::io::write_series_csv(dir / "mobility.csv", mobility);
      slir::io::write_series_csv(dir / "cases.csv", cases);
      finish(dir, "simulate", simulate, sim_seed,
             {"trajectory.csv", "synthetic.csv", "mobility.csv", "cases.csv"});
    } else if (fit->parsed()) {
      const slir::ObservedData data = fit_data.load();
      const fs::path dir = prepare_output(out_dir);
      slir::FitConfig cfg{fit_sampler.config(), fit_solver.config()};
      const slir::FitResult result = slir::fit(data, cfg);
      const auto table = slir::io::chain_table(result);
      {
        auto f = open_output(dir / "chains.csv");
        slir::io::write_chains_csv(f, table);
      }
      Json summary = slir::io::fit_summary_json(result);
      slir::io::write_json(dir / "summary.json", summary);
      std::vector<std::string> outputs{"chains.csv", "summary.json"};
      if (!fit_no_bands) {
        slir::Rng rng = slir::make_stream(fit_sampler.seed, 0xBA4D5ULL);
        const auto post = slir::predictive_band(result.draws(), data.N, data.i0, data.days(), rng, false);
        const auto prior = slir::predictive_band(prior_draws(fit_sampler.seed, 1000), data.N, data.i0,
                                                 data.days(), rng, true);
        auto f1 = open_output(dir / "posterior_band.csv");
        slir::io::write_band_csv(f1, post, &data);
        auto f2 = open_output(dir / "prior_band.csv");
        slir::io::write_band_csv(f2, prior, &data);
        outputs.insert(outputs.end(), {"posterior_band.csv", "prior_band.csv"});
      }
      finish(dir, "fit", fit, fit_sampler.seed, outputs);
    } else if (forecast->parsed()) {
      const slir::ObservedData data = fc_data.load();
      const fs::path dir = prepare_output(out_dir);
      slir::FitConfig cfg{fc_sampler.config(), fc_solver.config()};
      const int total = fc_total > 0 ? fc_total : data.days();
      const auto result = slir::forecast(data, fc_train, total, cfg);
      {
        auto f = open_output(dir / "band.csv");
        slir::io::write_band_csv(f, result.band, &data, fc_train);
      }
      Json summary = slir::io::fit_summary_json(result.fit);
      summary["train_days"] = fc_train;
      summary["total_days"] = total;
      if (total > 60) summary["width_I_day60"] = result.band.width_I(60);
      slir::io::write_json(dir / "summary.json", summary);
      {
        auto f = open_output(dir / "chains.csv");
        slir::io::write_chains_csv(f, slir::io::chain_table(result.fit));
      }
      finish(dir, "forecast", forecast, fc_sampler.seed, {"band.csv", "summary.json", "chains.csv"});
    } else if (sensitivity->parsed()) {
      const fs::path dir = prepare_output(out_dir);
      slir::ModelParams base = sens_model.params();
      if (!sens_summary.empty()) base = slir::io::medians_from_summary(slir::io::read_json(sens_summary));
      std::vector<double> targets;
      std::stringstream in(sens_targets);
      for (std::string item; std::getline(in, item, ',');) {
        try {
          std::size_t used = 0;
          targets.push_back(std::stod(item, &used));
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          throw IoError("bad_option", "cannot parse target '" + item + "'", {{"targets", sens_targets}});
        }
      }
      const auto rows = slir::sensitivity_sweep(base, sens_N, sens_i0, sens_horizon, targets);
      {
        auto f = open_output(dir / "sensitivity.csv");
        slir::io::write_sensitivity_csv(f, rows);
      }
      finish(dir, "sensitivity", sensitivity, 0, {"sensitivity.csv"});
    } else if (r0->parsed()) {
      const fs::path dir = prepare_output(out_dir);
      Json report;
      report["model"] = r0_model;
      if (r0_model == "sir") {
        report["beta"] = r0_beta;
        report["gamma"] = r0_params.gamma;
        report["R0_next_generation"] = slir::sir_r0_next_generation(r0_beta, r0_params.gamma, r0_N, r0_N);
        report["R0_closed_form"] = r0_beta / r0_params.gamma;
      } else if (r0_model == "slir") {
        const auto p = r0_params.params().structural();
        double susceptible = r0_N;
        if (r0_point == "mitigation") susceptible = slir::slir_mitigation_equilibrium(p, r0_N)(slir::compartment::S);
        else if (r0_point != "dfe") throw IoError("bad_option", "--at must be dfe or mitigation");
        report["parameters"] = {{"R0", p.R0}, {"gamma", p.gamma}, {"a", p.a}, {"b", p.b}};
        report["linearisation"] = r0_point;
        report["susceptible"] = susceptible;
        report["R0_next_generation"] = slir::slir_r0_next_generation(p, r0_N, susceptible);
        report["R0_closed_form"] = p.R0 * susceptible / r0_N;
      } else {
        throw IoError("bad_option", "--model must be sir or slir");
      }
      slir::io::write_json(dir / "r0.json", report);
      finish(dir, "r0", r0, 0, {"r0.json"}, report);
    } else if (diagnose->parsed()) {
      const auto table = slir::io::read_chains_csv(diag_chains);
      const auto& names = slir::ModelParams::names();
      const auto summary = slir::mcmc::summarize(table.by_chain(), {names.begin(), names.end()});
      const Json report = slir::io::summary_json(summary, table);
      if (!out_dir.empty()) {
        const fs::path dir = prepare_output(out_dir);
        slir::io::write_json(dir / "diagnose.json", report);
      }
      std::cout << report.dump(2) << '\n';
    }
  } catch (const IoError& e) {
    std::cerr << slir::io::error_envelope(e.code(), e.what(), e.context()).dump(2) << '\n';
    return 2;
  } catch (const slir::ode::ConfigurationError& e) {
    std::cerr << slir::io::error_envelope("configuration", e.what()).dump(2) << '\n';
    return 2;
  } catch (const slir::DomainError& e) {
    std::cerr << slir::io::error_envelope("domain", e.what()).dump(2) << '\n';
    return 2;
  } catch (const slir::mcmc::SamplerError& e) {
    std::cerr << slir::io::error_envelope("sampler", e.what()).dump(2) << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << slir::io::error_envelope("runtime", e.what()).dump(2) << '\n';
    return 3;
  }
  return 0;
}
