#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "seamless/trial.hpp"

namespace seamless {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of output. Under CR the conventional and robust tests coincide, so
/// the cell is run once and labelled "both".
struct CellSpec {
  DgpKind dgp = DgpKind::M1Logistic;
  ModelId model = ModelId::A0;
  Scheme scheme = Scheme::CR;
  TestVariant variant = TestVariant::Conventional;
  bool collapsed = false;
  Metric metric = Metric::LogRR;
  Eigen::Vector2d iota = Eigen::Vector2d::Zero();
};

struct RunSpec {
  std::vector<CellSpec> cells;
  int replications = 2000;
  int bootstrap_B = 500;
  double alpha = 0.05;
  std::uint64_t master_seed = 1;
  int n1 = 420;
  int n2 = 500;
  SelectionRule selection = SelectionRule::ArgmaxW;
  SchemeParams params;
  std::string output;
};

/// The (iota1, iota2) sweep (0,0), (0,0.1), (0.1,0.2), ..., (0.9,1.0).
std::vector<Eigen::Vector2d> iota_sweep();

/// Parses INI-style text. Keys before the first section are defaults; every
/// section is an experiment that inherits and may override them. Throws
/// ConfigError on anything malformed.
RunSpec parse_run_spec(std::istream& in);
RunSpec load_run_spec(const std::string& path);

/// Replaces every experiment's iota list with iota_sweep(), keeping cell order.
void expand_to_sweep(RunSpec& spec);

TrialConfig make_trial_config(const RunSpec& spec, const CellSpec& cell);

struct CellResult {
  CellSpec cell;
  SimulationSummary summary;
  bool failed = false;
  std::string error;
};

/// Runs every cell in declaration order; a throwing cell is marked failed.
std::vector<CellResult> run_cells(const RunSpec& spec, int threads);

std::vector<std::string> csv_header();
std::vector<std::string> csv_fields(const CellResult& row, const RunSpec& spec);
void write_csv(std::ostream& out, const std::vector<CellResult>& rows, const RunSpec& spec);
/// Human-readable table built from the same strings as the CSV.
void print_table(std::ostream& out, const std::vector<CellResult>& rows, const RunSpec& spec);

/// Single JSON object (one line) describing a trial outcome.
std::string outcome_json(const TrialOutcome& outcome, const TrialConfig& config, const DgpSpec& dgp,
                         std::uint64_t seed);

/// Worker count from SEAMLESS_THREADS, else the hardware concurrency.
int default_threads();

int run_cli(int argc, char** argv);

}  // namespace seamless
