#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "seamless/run_spec.hpp"

using namespace seamless;

namespace {

const std::string kSource = SEAMLESS_SOURCE_DIR;

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "seamless");
  std::vector<char*> argv;
  for (std::string& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  std::streambuf* old_out = std::cout.rdbuf(out.rdbuf());
  std::streambuf* old_err = std::cerr.rdbuf(err.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return {code, out.str(), err.str()};
}

RunSpec parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_spec(in);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "seamless_cli_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

const char* kTiny = R"(reps = 6
bootstrap = 20
seed = 5

[tiny]
dgp = m1
models = a0, a2
schemes = cr, ps
tests = conv, robust
iota = 0,0; 0.3,0.4
)";

}  // namespace

TEST_CASE("the null-effect table config expands to 21 rows") {
  const RunSpec spec = load_run_spec(kSource + "/configs/table1.cfg");
  REQUIRE(spec.cells.size() == 21);
  CHECK(spec.replications == 2000);
  CHECK(spec.bootstrap_B == 500);
  CHECK(spec.master_seed == 7);
  int collapsed = 0;
  for (const CellSpec& c : spec.cells) {
    collapsed += c.collapsed;
    CHECK(c.collapsed == (c.scheme == Scheme::CR));
    CHECK(c.iota.isZero());
    CHECK(c.metric == Metric::LogRR);
  }
  CHECK(collapsed == 3);
  CHECK(spec.cells[0].model == ModelId::A0);
  CHECK(spec.cells[7].model == ModelId::A1);
  CHECK(spec.cells[1].scheme == Scheme::STRPB);
  CHECK(spec.cells[1].variant == TestVariant::Conventional);
  CHECK(spec.cells[2].variant == TestVariant::Robust);

  const TrialConfig tc = make_trial_config(spec, spec.cells[2]);
  CHECK(tc.n1 == 420);
  CHECK(tc.n2 == 500);
  CHECK(tc.bootstrap_B == 500);
  CHECK(tc.variant == TestVariant::Robust);
}

TEST_CASE("grid mode yields eleven iota pairs per curve") {
  const std::vector<Eigen::Vector2d> sweep = iota_sweep();
  REQUIRE(sweep.size() == 11);
  CHECK(sweep[0].isZero());
  CHECK(sweep[1].isApprox(Eigen::Vector2d(0.0, 0.1)));
  CHECK(sweep[10].isApprox(Eigen::Vector2d(0.9, 1.0)));

  const RunSpec fig = load_run_spec(kSource + "/configs/power_curves.cfg");
  CHECK(fig.cells.size() == 2 * 3 * 2 * 11);
  for (std::size_t start = 0; start < fig.cells.size(); start += 11) {
    int power_points = 0;
    for (std::size_t i = 0; i < 11; ++i) {
      const CellSpec& c = fig.cells[start + i];
      CHECK(c.model == fig.cells[start].model);
      CHECK(c.scheme == fig.cells[start].scheme);
      CHECK(c.variant == fig.cells[start].variant);
      CHECK(c.iota.isApprox(sweep[i]));
      power_points += !c.iota.isZero();
    }
    CHECK(power_points == 10);
  }

  RunSpec t1 = load_run_spec(kSource + "/configs/table1.cfg");
  expand_to_sweep(t1);
  CHECK(t1.cells.size() == 21 * 11);
}

TEST_CASE("malformed configs are rejected") {
  const char* bad[] = {
      "[x]\ndgp = m9\n",
      "[x]\ndgp = m1\nmodels = a7\n",
      "[x]\ndgp = m1\nschemes = coin\n",
      "[x]\ndgp = m1\niota = 0.1\n",
      "[x]\ndgp = m1\niota = a,b\n",
      "[x]\ndgp = m1\ncolour = red\n",
      "[x]\ndgp = m1\nreps = 10\n",
      "reps = -3\n[x]\ndgp = m1\n",
      "block_size = 5\n[x]\ndgp = m1\n",
      "alpha = 1.5\n[x]\ndgp = m1\n",
      "reps = 10\n",
      "[x]\nmodels = a0\n",
      "[x]\ndgp = m1, m2\n",
  };
  for (const char* text : bad) {
    INFO(std::string(text));
    CHECK_THROWS_AS(parse(text), ConfigError);
  }
  CHECK_THROWS_AS(load_run_spec(kSource + "/configs/missing.cfg"), ConfigError);
  CHECK(parse("[x]\ndgp = aa\n").cells.size() == 7);

  const auto path = scratch("bad.cfg");
  std::ofstream(path) << bad[0];
  const CliRun r = cli({"simulate", "--config", path.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("config error") != std::string::npos);
  CHECK(cli({"simulate", "--config", (kSource + "/configs/missing.cfg")}).code == 2);
  CHECK(cli({"simulate"}).code == 2);
  CHECK(cli({"trial", "--dgp", "zz"}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("CSV output is reproducible and the table repeats its fields") {
  const auto cfg = scratch("tiny.cfg");
  std::ofstream(cfg) << kTiny;
  const auto a = scratch("a.csv"), b = scratch("b.csv"), c = scratch("c.csv");
  const CliRun first = cli({"simulate", "--config", cfg.string(), "--out", a.string(), "--threads", "1"});
  const CliRun second = cli({"simulate", "--config", cfg.string(), "--out", b.string(), "--threads", "1"});
  const CliRun parallel = cli({"--threads", "3", "simulate", "--config", cfg.string(), "--out", c.string()});
  REQUIRE(first.code == 0);
  const std::string csv = slurp(a);
  CHECK(csv == slurp(b));
  CHECK(csv == slurp(c));
  CHECK(first.out == second.out);

  std::istringstream lines(csv);
  std::string header;
  std::getline(lines, header);
  CHECK(header ==
        "dgp,model,scheme,test,metric,iota1,iota2,stage1_rate,stage2_rate,overall_rate,mc_se,invalid_count,reps,seed");
  int rows = 0;
  for (std::string line; std::getline(lines, line);) ++rows;
  CHECK(rows == 2 * (1 + 2) * 2);

  // every CSV field shown in the table appears verbatim in its row
  const RunSpec spec = load_run_spec(cfg.string());
  const std::vector<CellResult> results = run_cells(spec, 1);
  std::ostringstream table, csv_again;
  print_table(table, results, spec);
  write_csv(csv_again, results, spec);
  CHECK(csv_again.str() == csv);
  std::istringstream table_lines(table.str());
  std::string line;
  std::getline(table_lines, line);  // column titles
  for (const CellResult& row : results) {
    REQUIRE(std::getline(table_lines, line));
    std::istringstream tokens(line);
    std::vector<std::string> shown;
    for (std::string t; tokens >> t;) shown.push_back(t);
    const std::vector<std::string> fields = csv_fields(row, spec);
    REQUIRE(shown.size() == 12);
    for (std::size_t i = 0; i < shown.size(); ++i) CHECK(shown[i] == fields[i]);
    CHECK(fields[9].find('.') == fields[9].size() - 3);  // percent, two decimals
  }

  // overrides from the command line win over the file
  const CliRun more = cli({"simulate", "--config", cfg.string(), "--reps", "3", "--seed", "9", "--threads", "1"});
  CHECK(more.code == 0);
  CHECK(more.out.find("reps=3 seed=9") != std::string::npos);
}

TEST_CASE("trial mode prints one JSON object per replicate") {
  const CliRun r = cli({"trial", "--dgp", "m1", "--model", "a2", "--scheme", "hh", "--seed", "1", "--count", "3",
                        "--bootstrap", "50", "--threads", "1"});
  CHECK(r.code == 0);
  std::istringstream lines(r.out);
  int count = 0;
  for (std::string line; std::getline(lines, line); ++count) {
    const nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("valid").get<bool>());
    CHECK(j.at("scheme") == "hh");
    CHECK(j.at("model") == "A2");
    const double p1 = j.at("P1");
    CHECK(p1 >= 0.0);
    CHECK(p1 <= 1.0);
    CHECK(j.at("stage1").contains("W_robust"));
    const int k = j.at("selected_arm");
    CHECK((k == 1 || k == 2));
  }
  CHECK(count == 3);
  CHECK(cli({"trial", "--seed", "1", "--count", "3", "--bootstrap", "50"}).out ==
        cli({"trial", "--seed", "1", "--count", "3", "--bootstrap", "50"}).out);
}
