#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "seamless/estimation.hpp"
#include "seamless/inference.hpp"
#include "seamless/randomization.hpp"
#include "seamless/rng.hpp"
#include "seamless/variance.hpp"

namespace seamless {

enum class DgpKind { M1Logistic, M2Probit, Alopecia };
enum class ModelId { A0, A1, A2 };
enum class SelectionRule { ArgmaxW, ArgmaxDelta };

std::string_view to_string(DgpKind kind);
std::string_view to_string(ModelId model);
std::string_view to_string(TestVariant variant);
DgpKind parse_dgp(std::string_view name);
ModelId parse_model(std::string_view name);
TestVariant parse_variant(std::string_view name);
SelectionRule parse_selection(std::string_view name);

/// Data-generating process. `true_iota` holds iota_1..iota_K (the control is 0).
struct DgpSpec {
  DgpKind kind = DgpKind::M1Logistic;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd true_iota;

  static DgpSpec m1(const Eigen::VectorXd& iota);
  static DgpSpec m2(const Eigen::VectorXd& iota);
  static DgpSpec alopecia(const Eigen::VectorXd& iota);
  static DgpSpec make(DgpKind kind, const Eigen::VectorXd& iota);

  int num_covariates() const;
  double linear_predictor(const Eigen::VectorXd& covariates, int arm) const;
  double success_probability(const Eigen::VectorXd& covariates, int arm) const;
  Eigen::VectorXd draw_covariates(Engine& rng) const;

  /// Columns used to form strata and their discretization.
  std::vector<int> randomization_columns() const;
  StratumSchema randomization_schema() const;
  /// Covariate columns entering working models A0 / A1 / A2.
  std::vector<int> model_columns(ModelId model) const;
};

struct Patient {
  Eigen::VectorXd covariates;
  double outcome = 0.0;
};

Patient generate_patient(const DgpSpec& dgp, int arm, Engine& rng);

struct TrialConfig {
  int n1 = 420;
  int n2 = 500;
  int num_treatments = 2;  // K
  Scheme scheme = Scheme::STRPB;
  SchemeParams params;
  ModelId model = ModelId::A0;
  Metric metric = Metric::LogRR;
  TestVariant variant = TestVariant::Robust;
  double alpha = 0.05;
  int bootstrap_B = 500;
  SelectionRule selection = SelectionRule::ArgmaxW;
  FitOptions fit_options;
};

/// Analysis of one stage. Robust fields are filled when the robust variant was
/// requested.
struct StageResult {
  int num_arms = 0;
  Eigen::VectorXd mu_hat;
  Eigen::VectorXd delta_hat;
  GammaDecomposition gamma;
  Eigen::VectorXd se_conv, W_conv;
  Eigen::VectorXd se_robust, W_robust;
  Eigen::MatrixXd R_hat;  // for the requested variant
  double p_value = 1.0;
  bool variance_guarded = false;
  bool dunnett_repaired = false;
  int fit_iterations = 0;

  const Eigen::VectorXd& W(TestVariant v) const { return v == TestVariant::Robust ? W_robust : W_conv; }
};

struct TrialOutcome {
  bool valid = true;
  std::string error;
  StageResult stage1;
  int selected_arm = 0;  // in 1..K
  StageResult stage2;
  double P1 = 1.0;
  double P2 = 1.0;
  Combination combined;
  bool stage1_reject = false;
  bool stage2_reject = false;
  bool overall_reject = false;
};

/// Stage-wise estimation and testing on already collected data.
StageResult analyze_stage(const TrialDataset& data, const WorkingModel& model, const TrialConfig& config,
                          const BootstrapDesign& design, std::uint64_t bootstrap_seed,
                          const DunnettIntegrator& dunnett);

/// Enroll and randomize one stage. `arm_map` maps local arm index to the DGP arm.
TrialDataset enroll_stage(const DgpSpec& dgp, const TrialConfig& config, const std::vector<int>& arm_map, int n,
                          std::uint64_t covariate_seed, std::uint64_t randomizer_seed, std::uint64_t outcome_seed);

/// Stage 2 on {control, selected}; depends on stage 1 only through `selected_arm`.
TrialDataset enroll_stage2(const DgpSpec& dgp, const TrialConfig& config, int selected_arm, std::uint64_t seed);

TrialOutcome run_trial(const TrialConfig& config, const DgpSpec& dgp, std::uint64_t seed);
TrialOutcome run_trial(const TrialConfig& config, const DgpSpec& dgp, std::uint64_t seed,
                       const DunnettIntegrator& dunnett);

/// Seed of replicate r under a master seed.
inline std::uint64_t replicate_seed(std::uint64_t master_seed, int replicate) {
  return derive_seed(master_seed, 0x1000000ULL + static_cast<std::uint64_t>(replicate));
}

/// Runs replicates on `threads` workers; the result is independent of `threads`.
std::vector<TrialOutcome> run_replicates(const TrialConfig& config, const DgpSpec& dgp, int replications,
                                         int threads, std::uint64_t master_seed);

struct SimulationSummary {
  int replications = 0;
  int valid = 0;
  int invalid = 0;
  double stage1_rate = 0.0;
  double stage2_rate = 0.0;
  double overall_rate = 0.0;
  double stage1_se = 0.0;
  double stage2_se = 0.0;
  double overall_se = 0.0;
  Eigen::VectorXd delta1_mean;       // per treatment arm
  Eigen::VectorXd delta1_sd_scaled;  // SD x sqrt(n1)
  double delta2_mean = 0.0;
  double delta2_sd_scaled = 0.0;     // SD x sqrt(n2)
};

SimulationSummary summarize(const std::vector<TrialOutcome>& outcomes, const TrialConfig& config);

SimulationSummary simulate(const TrialConfig& config, const DgpSpec& dgp, int replications, int threads,
                           std::uint64_t master_seed);

}  // namespace seamless
