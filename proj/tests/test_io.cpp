#include <doctest.h>

#include "slir/io.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace slir;
using namespace slir::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("slir_io_test_" + std::to_string(std::rand()) + "_" +
                                        std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string error_code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.code();
  }
  return "";
}

int error_line_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const IoError& e) {
    return e.context().value("line", -1);
  }
  return -1;
}

}  // namespace

TEST_CASE("dates") {
  CHECK(format_date(parse_date("2020-03-08")) == "2020-03-08");
  CHECK((parse_date("2020-03-01") - parse_date("2020-02-28")).count() == 2);
  CHECK(error_code_of([] { parse_date("2020-02-30"); }) == "bad_date");
  CHECK(error_code_of([] { parse_date("3/8/2020"); }) == "bad_date");
  CHECK(error_code_of([] { parse_date("2020-03-08x"); }) == "bad_date");
}

TEST_CASE("series files") {
  TempDir dir;
  SUBCASE("round trip") {
    const auto p = dir.write("s.csv", "date,value\n2020-03-08,1.5\n2020-03-09,2\n2020-03-10,\n");
    const auto s = read_series_csv(p);
    REQUIRE(s.size() == 3);
    CHECK(s.values[0] == 1.5);
    CHECK(std::isnan(s.values[2]));
    CHECK(s.range() == "2020-03-08 .. 2020-03-10 (3 days)");

    write_series_csv(dir.path / "t.csv", s);
    const auto t = read_series_csv(dir.path / "t.csv");
    CHECK(t.dates == s.dates);
    CHECK(t.values[1] == 2.0);
  }
  SUBCASE("errors name the line") {
    const auto back = dir.write("b.csv", "date,value\n2020-03-08,1\n2020-03-10,1\n2020-03-09,1\n");
    CHECK(error_code_of([&] { read_series_csv(back); }) == "non_monotone_dates");
    CHECK(error_line_of([&] { read_series_csv(back); }) == 4);

    const auto junk = dir.write("j.csv", "date,value\n2020-03-08,abc\n");
    CHECK(error_code_of([&] { read_series_csv(junk); }) == "bad_value");
    CHECK(error_line_of([&] { read_series_csv(junk); }) == 2);

    CHECK(error_code_of([&] { read_series_csv(dir.write("h.csv", "day,count\n")); }) == "bad_header");
    CHECK(error_code_of([&] { read_series_csv(dir.write("e.csv", "")); }) == "empty_file");
    CHECK(error_code_of([&] { read_series_csv(dir.path / "missing.csv"); }) == "file_not_found");
  }
}

TEST_CASE("mobility loader") {
  TempDir dir;
  std::vector<std::string> warnings;
  SUBCASE("percent of baseline") {
    const auto p = dir.write("m.csv", "date,value\n2020-03-08,100\n2020-03-09,20\n2020-03-10,130\n");
    const auto m = load_mobility(p, MobilityFormat::PercentOfBaseline, GapPolicy::Error, warnings);
    CHECK(m.values[0] == 1e-6);
    CHECK(m.values[1] == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(m.values[2] == 1e-6);
    CHECK(warnings.size() == 1);
  }
  SUBCASE("decline fractions") {
    const auto p = dir.write("m.csv", "date,value\n2020-03-08,0.25\n2020-03-09,1.0\n");
    const auto m = load_mobility(p, MobilityFormat::DeclineFraction, GapPolicy::Error, warnings);
    CHECK(m.values[0] == 0.25);
    CHECK(m.values[1] == 1 - 1e-6);
  }
  SUBCASE("gaps") {
    const auto p = dir.write("g.csv", "date,value\n2020-03-08,50\n2020-03-11,40\n2020-03-12,\n");
    const auto m = load_mobility(p, MobilityFormat::PercentOfBaseline, GapPolicy::ForwardFill, warnings);
    REQUIRE(m.size() == 5);
    CHECK(m.values[1] == 0.5);
    CHECK(m.values[2] == 0.5);
    CHECK(m.values[4] == doctest::Approx(0.6));
    CHECK(!warnings.empty());
    CHECK(error_code_of([&] {
            load_mobility(p, MobilityFormat::PercentOfBaseline, GapPolicy::Error, warnings);
          }) == "date_gap");
  }
  CHECK(parse_mobility_format("fraction") == MobilityFormat::DeclineFraction);
  CHECK(parse_gap_policy("error") == GapPolicy::Error);
  CHECK(error_code_of([] { parse_mobility_format("ratio"); }) == "bad_option");
}

TEST_CASE("case loader and alignment") {
  TempDir dir;
  std::vector<std::string> warnings;
  const auto cases_path =
      dir.write("c.csv", "date,value\n2020-03-06,1\n2020-03-07,2\n2020-03-08,3\n2020-03-09,4.6\n2020-03-10,9\n");
  const auto cases = load_cases(cases_path, warnings);
  CHECK(cases.values[3] == 5);
  CHECK(warnings.size() == 1);

  const auto mob_path = dir.write("m.csv", "date,value\n2020-03-08,90\n2020-03-09,70\n2020-03-10,50\n");
  const auto mobility = load_mobility(mob_path, MobilityFormat::PercentOfBaseline, GapPolicy::Error, warnings);

  const auto start = parse_date("2020-03-08");
  const auto trimmed = trim_to_start(cases, start);
  CHECK(trimmed.size() == 3);
  CHECK(trimmed.dates.front() == start);

  const ObservedData data = align(mobility, cases, start, 8336817);
  CHECK(data.days() == 3);
  CHECK(data.i0 == 3);
  CHECK(data.y_I == std::vector<long long>{3, 5, 9});
  CHECK(data.y_L[2] == doctest::Approx(0.5));
  CHECK(data.t0_label == "2020-03-08");
  CHECK(align(mobility, cases, start, 8336817, 2, 7).i0 == 7);
  CHECK(align(mobility, cases, start, 8336817, 2).days() == 2);

  const auto short_mob = load_mobility(dir.write("s.csv", "date,value\n2020-03-08,90\n2020-03-09,70\n"),
                                       MobilityFormat::PercentOfBaseline, GapPolicy::Error, warnings);
  try {
    align(short_mob, cases, start, 8336817);
    FAIL("expected an alignment error");
  } catch (const IoError& e) {
    CHECK(e.code() == "alignment");
    CHECK(e.context()["mobility"] == "2020-03-08 .. 2020-03-09 (2 days)");
    CHECK(e.context()["cases"] == "2020-03-08 .. 2020-03-10 (3 days)");
  }
  CHECK(error_code_of([&] { align(mobility, cases, parse_date("2020-03-01"), 8336817); }) == "alignment");

  CHECK(error_code_of([&] { load_cases(dir.write("n.csv", "date,value\n2020-03-08,-2\n"), warnings); }) ==
        "negative_count");
  CHECK(error_code_of([&] {
          load_cases(dir.write("gap.csv", "date,value\n2020-03-08,2\n2020-03-10,2\n"), warnings);
        }) == "date_gap");
  const auto zero = load_cases(dir.write("z.csv", "date,value\n2020-03-08,0\n2020-03-09,1\n2020-03-10,1\n"), warnings);
  CHECK(error_code_of([&] { align(mobility, zero, start, 8336817); }) == "bad_initial_cases");
}

TEST_CASE("chains table round trip") {
  TempDir dir;
  ChainTable table;
  table.params.resize(6, ModelParams::size);
  Rng rng = make_stream(91, 0);
  for (int i = 0; i < 6; ++i) {
    table.chain.push_back(i / 3);
    table.iter.push_back(i % 3);
    const ModelParams p = sample_prior(rng);
    table.params.row(i) = p.to_vector().transpose();
    table.log_posterior.push_back(-1234.5678901234567 + i / 7.0);
    table.divergent.push_back(i == 4);
  }
  {
    std::ofstream out(dir.path / "chains.csv");
    write_chains_csv(out, table);
  }
  const ChainTable back = read_chains_csv(dir.path / "chains.csv");
  CHECK(back.chain == table.chain);
  CHECK(back.iter == table.iter);
  CHECK((back.params.array() == table.params.array()).all());
  CHECK(back.log_posterior == table.log_posterior);
  CHECK(back.divergent == table.divergent);
  CHECK(back.n_chains() == 2);
  CHECK(back.divergences() == 1);
  CHECK(back.by_chain()[1].rows() == 3);

  std::ifstream in(dir.path / "chains.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "chain,iter,R0,gamma,a,b,phi1,phi2,log_posterior,divergent");
}

TEST_CASE("summary documents") {
  std::vector<mcmc::ParameterSummary> s;
  for (const auto& name : ModelParams::names()) {
    mcmc::ParameterSummary p;
    p.name = name;
    p.median = name.size();
    p.rhat = std::nan("");
    s.push_back(p);
  }
  ChainTable table;
  table.chain = {0, 0, 1, 1};
  table.divergent = {0, 1, 0, 0};
  const Json doc = summary_json(s, table);
  CHECK(doc["n_chains"] == 2);
  CHECK(doc["draws_per_chain"] == 2);
  CHECK(doc["divergences"] == 1);
  CHECK(doc["parameters"][0]["rhat"].is_null());
  const ModelParams m = medians_from_summary(doc);
  CHECK(m.R0 == 2);
  CHECK(m.gamma == 5);

  Json broken = doc;
  broken["parameters"].erase(3);
  CHECK(error_code_of([&] { medians_from_summary(broken); }) == "bad_summary");
}

TEST_CASE("band and sensitivity writers") {
  PredictiveBand band;
  band.median_I = {1, 2};
  band.lower_I = {0, 1};
  band.upper_I = {2, 4};
  band.median_L = {0.1, 0.2};
  band.lower_L = {0.05, 0.1};
  band.upper_L = {0.2, 0.3};
  ObservedData truth;
  truth.y_L = {0.1, 0.25};
  truth.y_I = {1, 3};
  std::ostringstream out;
  write_band_csv(out, band, &truth, 1);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "day,series,median,lower,upper,observed,held_out");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
  CHECK(out.str().find("1,y_I,2,1,4,3,1") != std::string::npos);

  std::ostringstream sens;
  SensitivityRow ok{0.8, 0.8, 0.01, 0.02, std::nullopt}, bad{1.5, 0, 0, 0, std::string("unreachable")};
  write_sensitivity_csv(sens, {ok, bad});
  CHECK(sens.str().rfind("target_decline,peak_decline,a,attack_rate,error\n", 0) == 0);
  CHECK(sens.str().find("unreachable") != std::string::npos);
}

TEST_CASE("manifest and environment") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");

  const Json m = manifest("simulate", Json{{"seed", 3}}, 3, {"a.csv"});
  CHECK(m["tool"] == "slir");
  CHECK(m["version"] == version());
  CHECK(m["seed"] == 3);
  CHECK(m["outputs"][0] == "a.csv");
  CHECK(m["config_hash"] == fnv1a_hex(Json{{"seed", 3}}.dump()));

  CHECK(output_directory("explicit") == fs::path("explicit"));
  ::setenv("SLIR_OUTPUT_DIR", "/tmp/from_env", 1);
  CHECK(output_directory("") == fs::path("/tmp/from_env"));
  ::unsetenv("SLIR_OUTPUT_DIR");
  CHECK(output_directory("") == fs::path("slir_output"));

  const Json env = error_envelope("alignment", "ranges differ", {{"cases", "x"}});
  CHECK(env["error"]["code"] == "alignment");
  CHECK(env["error"]["context"]["cases"] == "x");
}
