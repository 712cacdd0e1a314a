#include "seamless/trial.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <thread>

namespace seamless {

std::string_view to_string(DgpKind kind) {
  switch (kind) {
    case DgpKind::M1Logistic: return "m1";
    case DgpKind::M2Probit: return "m2";
    case DgpKind::Alopecia: return "aa";
  }
  return "?";
}

std::string_view to_string(ModelId model) {
  switch (model) {
    case ModelId::A0: return "A0";
    case ModelId::A1: return "A1";
    case ModelId::A2: return "A2";
  }
  return "?";
}

std::string_view to_string(TestVariant variant) {
  return variant == TestVariant::Robust ? "robust" : "conv";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

}  // namespace

DgpKind parse_dgp(std::string_view name) {
  const std::string s = lower(name);
  if (s == "m1") return DgpKind::M1Logistic;
  if (s == "m2") return DgpKind::M2Probit;
  if (s == "aa") return DgpKind::Alopecia;
  throw InputError("unknown dgp '" + std::string(name) + "' (expected m1, m2 or aa)");
}

ModelId parse_model(std::string_view name) {
  const std::string s = lower(name);
  if (s == "a0") return ModelId::A0;
  if (s == "a1") return ModelId::A1;
  if (s == "a2") return ModelId::A2;
  throw InputError("unknown working model '" + std::string(name) + "' (expected a0, a1 or a2)");
}

TestVariant parse_variant(std::string_view name) {
  const std::string s = lower(name);
  if (s == "conv" || s == "conventional") return TestVariant::Conventional;
  if (s == "robust") return TestVariant::Robust;
  throw InputError("unknown test '" + std::string(name) + "' (expected conv or robust)");
}

SelectionRule parse_selection(std::string_view name) {
  const std::string s = lower(name);
  if (s == "w" || s == "argmaxw") return SelectionRule::ArgmaxW;
  if (s == "delta" || s == "argmaxdelta") return SelectionRule::ArgmaxDelta;
  throw InputError("unknown selection rule '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Data-generating processes

DgpSpec DgpSpec::m1(const Eigen::VectorXd& iota) { return {DgpKind::M1Logistic, Eigen::Vector3d(-1.0, 1.0, 2.0), iota}; }

DgpSpec DgpSpec::m2(const Eigen::VectorXd& iota) {
  return {DgpKind::M2Probit, Eigen::Vector4d(-1.0, 1.0, 1.0, 0.5), iota};
}

DgpSpec DgpSpec::alopecia(const Eigen::VectorXd& iota) {
  return {DgpKind::Alopecia, Eigen::Vector3d(1.8, -0.04, -1.5), iota};
}

DgpSpec DgpSpec::make(DgpKind kind, const Eigen::VectorXd& iota) {
  switch (kind) {
    case DgpKind::M1Logistic: return m1(iota);
    case DgpKind::M2Probit: return m2(iota);
    case DgpKind::Alopecia: return alopecia(iota);
  }
  throw InputError("unknown dgp");
}

int DgpSpec::num_covariates() const { return kind == DgpKind::M2Probit ? 3 : 2; }

double DgpSpec::linear_predictor(const Eigen::VectorXd& x, int arm) const {
  if (arm < 0 || arm > true_iota.size()) throw InputError("arm out of range for this dgp");
  if (x.size() != num_covariates()) throw InputError("covariate vector has the wrong length");
  const Eigen::VectorXd& b = coefficients;
  const double shift = arm == 0 ? 0.0 : true_iota[arm - 1];
  switch (kind) {
    case DgpKind::M1Logistic:
    case DgpKind::Alopecia:
      return b[0] + shift + b[1] * x[0] + b[2] * x[1];
    case DgpKind::M2Probit:
      return b[0] + shift + b[1] * x[0] * x[1] + b[2] * std::exp(x[0] + x[1]) + b[3] * x[2];
  }
  return 0.0;
}

double DgpSpec::success_probability(const Eigen::VectorXd& x, int arm) const {
  const double eta = linear_predictor(x, arm);
  return kind == DgpKind::M2Probit ? normal_cdf(eta) : inverse_link(Link::Logit, eta);
}

Eigen::VectorXd DgpSpec::draw_covariates(Engine& rng) const {
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(num_covariates());
  switch (kind) {
    case DgpKind::M1Logistic:
      x[0] = uniform01(rng) < 0.5 ? 1.0 : 0.0;
      x[1] = normal(rng);
      break;
    case DgpKind::M2Probit:
      for (int j = 0; j < 3; ++j) x[j] = normal(rng);
      break;
    case DgpKind::Alopecia:
      x[0] = 50.0 + 50.0 * uniform01(rng);
      x[1] = uniform01(rng) < 0.35 ? 1.0 : 0.0;
      break;
  }
  return x;
}

std::vector<int> DgpSpec::randomization_columns() const { return {0, 1}; }

StratumSchema DgpSpec::randomization_schema() const {
  switch (kind) {
    case DgpKind::M1Logistic:
      return StratumSchema({CovariateRule::discrete(2), CovariateRule::threshold(0.0)});
    case DgpKind::M2Probit:
      return StratumSchema({CovariateRule::threshold(0.0), CovariateRule::threshold(0.0)});
    case DgpKind::Alopecia:
      return StratumSchema({CovariateRule::threshold(75.0), CovariateRule::discrete(2)});
  }
  throw InputError("unknown dgp");
}

std::vector<int> DgpSpec::model_columns(ModelId model) const {
  const bool m2 = kind == DgpKind::M2Probit;
  switch (model) {
    case ModelId::A0: return {};
    case ModelId::A1: return m2 ? std::vector<int>{0, 1} : std::vector<int>{0};
    case ModelId::A2: return m2 ? std::vector<int>{0, 1, 2} : std::vector<int>{0, 1};
  }
  return {};
}

Patient generate_patient(const DgpSpec& dgp, int arm, Engine& rng) {
  Patient p;
  p.covariates = dgp.draw_covariates(rng);
  p.outcome = uniform01(rng) < dgp.success_probability(p.covariates, arm) ? 1.0 : 0.0;
  return p;
}

// ---------------------------------------------------------------------------
// One stage

TrialDataset enroll_stage(const DgpSpec& dgp, const TrialConfig& config, const std::vector<int>& arm_map, int n,
                          std::uint64_t covariate_seed, std::uint64_t randomizer_seed, std::uint64_t outcome_seed) {
  if (n <= 0) throw InputError("stage sample size must be positive");
  const int arms = static_cast<int>(arm_map.size());
  const StratumSchema schema = dgp.randomization_schema();
  const std::vector<int> rand_cols = dgp.randomization_columns();
  Randomizer randomizer(config.scheme, config.params, arms, schema);
  Engine cov_rng(covariate_seed), rand_rng(randomizer_seed), out_rng(outcome_seed);

  TrialDataset data;
  data.num_arms = arms;
  data.stratum_count = schema.stratum_count();
  data.covariates.resize(n, dgp.num_covariates());
  data.outcome.resize(n);
  data.arm.resize(n);
  data.stratum.resize(n);
  std::vector<double> rand_x(rand_cols.size());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = dgp.draw_covariates(cov_rng);
    for (std::size_t j = 0; j < rand_cols.size(); ++j) rand_x[j] = x[rand_cols[j]];
    const StratumCell cell = schema.discretize(rand_x);
    const int local = randomizer.assign(cell, rand_rng);
    data.covariates.row(i) = x.transpose();
    data.arm[i] = local;
    data.stratum[i] = cell.stratum;
    data.outcome[i] = uniform01(out_rng) < dgp.success_probability(x, arm_map[local]) ? 1.0 : 0.0;
  }
  return data;
}

TrialDataset enroll_stage2(const DgpSpec& dgp, const TrialConfig& config, int selected_arm, std::uint64_t seed) {
  return enroll_stage(dgp, config, {0, selected_arm}, config.n2, derive_seed(seed, stream::kCovariates2),
                      derive_seed(seed, stream::kRandomizer2), derive_seed(seed, stream::kOutcomes2));
}

StageResult analyze_stage(const TrialDataset& data, const WorkingModel& model, const TrialConfig& config,
                          const BootstrapDesign& design, std::uint64_t bootstrap_seed,
                          const DunnettIntegrator& dunnett) {
  StageResult out;
  out.num_arms = data.num_arms;
  // an arm left empty by chance is a property of the sample, not a caller error
  const Eigen::VectorXi counts = data.arm_counts();
  for (Eigen::Index k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) throw DegenerateDataError("arm " + std::to_string(k) + " has no patients");
  }
  const ThetaEstimate theta = fit(data, model, config.fit_options);
  out.fit_iterations = theta.iterations;
  const MuEstimate mu = estimate_mu(theta, data, model);
  out.mu_hat = mu.mu;

  out.gamma.base = gamma_base(data, mu);
  out.gamma.adj = gamma_adj(data, mu);
  out.gamma.car_adj = Eigen::MatrixXd::Zero(data.num_arms, data.num_arms);
  const bool robust = config.variant == TestVariant::Robust;
  if (robust && design.scheme != Scheme::CR) {
    const StratumResidualMeans L = stratum_residual_means(data, mu);
    const SigmaBlocks cr = sigma_cr(L.pi_hat_s, data.num_arms);
    const SigmaBlocks car = sigma_car_bootstrap(data.stratum, design, config.bootstrap_B, bootstrap_seed);
    out.gamma.car_adj = gamma_car_adj(L, cr, car);
  }

  out.delta_hat = effect(mu.mu, config.metric);
  const Eigen::MatrixXd G = metric_jacobian(mu.mu, config.metric);
  const double n = static_cast<double>(data.size());
  const Eigen::MatrixXd conv = out.gamma.conv();
  const WaldStatistics wc = wald(out.delta_hat, G, conv, n);
  out.se_conv = wc.se;
  out.W_conv = wc.W;
  Eigen::MatrixXd chosen = conv;
  if (robust) {
    chosen = out.gamma.robust_guarded(out.variance_guarded);
    const WaldStatistics wr = wald(out.delta_hat, G, chosen, n);
    out.se_robust = wr.se;
    out.W_robust = wr.W;
  }
  out.R_hat = correlation(G, chosen);
  const DunnettResult p = dunnett.p_value(out.W(config.variant), out.R_hat);
  out.p_value = p.p_value;
  out.dunnett_repaired = p.repaired;
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage trial

TrialOutcome run_trial(const TrialConfig& config, const DgpSpec& dgp, std::uint64_t seed) {
  const DunnettIntegrator dunnett(config.num_treatments);
  return run_trial(config, dgp, seed, dunnett);
}

TrialOutcome run_trial(const TrialConfig& config, const DgpSpec& dgp, std::uint64_t seed,
                       const DunnettIntegrator& dunnett) {
  if (config.n1 <= 0 || config.n2 <= 0 || config.num_treatments < 1 || config.bootstrap_B < 2 ||
      !(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw InputError("invalid trial configuration");
  }
  if (dgp.true_iota.size() != config.num_treatments) throw InputError("true_iota length must equal K");
  if (dunnett.dimension() != config.num_treatments) throw InputError("Dunnett integrator dimension must equal K");

  TrialOutcome out;
  const std::vector<int> cols = dgp.model_columns(config.model);
  const StratumSchema schema = dgp.randomization_schema();
  try {
    std::vector<int> arm_map(config.num_treatments + 1);
    for (int a = 0; a <= config.num_treatments; ++a) arm_map[a] = a;
    const TrialDataset stage1 =
        enroll_stage(dgp, config, arm_map, config.n1, derive_seed(seed, stream::kCovariates1),
                     derive_seed(seed, stream::kRandomizer1), derive_seed(seed, stream::kOutcomes1));
    const WorkingModel model1{Link::Logit, config.num_treatments + 1, cols};
    const BootstrapDesign design1{config.scheme, config.params, schema, config.num_treatments + 1};
    out.stage1 = analyze_stage(stage1, model1, config, design1, derive_seed(seed, stream::kBootstrap1), dunnett);
    out.P1 = out.stage1.p_value;

    const Eigen::VectorXd& score =
        config.selection == SelectionRule::ArgmaxW ? out.stage1.W(config.variant) : out.stage1.delta_hat;
    Eigen::Index best = 0;
    score.maxCoeff(&best);
    out.selected_arm = static_cast<int>(best) + 1;

    const TrialDataset stage2 = enroll_stage2(dgp, config, out.selected_arm, seed);
    const WorkingModel model2{Link::Logit, 2, cols};
    const BootstrapDesign design2{config.scheme, config.params, schema, 2};
    const DunnettIntegrator single(1);
    out.stage2 = analyze_stage(stage2, model2, config, design2, derive_seed(seed, stream::kBootstrap2), single);
    out.P2 = out.stage2.p_value;

    out.combined = combine(out.P1, out.P2, config.alpha);
    out.stage1_reject = out.P1 < config.alpha;
    out.stage2_reject = out.P2 < config.alpha;
    out.overall_reject = out.combined.reject;
  } catch (const FitError& e) {
    out.valid = false;
    out.error = std::string("fit: ") + e.what();
  } catch (const DegenerateDataError& e) {
    out.valid = false;
    out.error = std::string("data: ") + e.what();
  } catch (const DegenerateVarianceError& e) {
    out.valid = false;
    out.error = std::string("variance: ") + e.what();
  } catch (const DomainError& e) {
    out.valid = false;
    out.error = std::string("domain: ") + e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replicates

std::vector<TrialOutcome> run_replicates(const TrialConfig& config, const DgpSpec& dgp, int replications,
                                         int threads, std::uint64_t master_seed) {
  if (replications < 1) throw InputError("replications must be at least 1");
  threads = std::clamp(threads, 1, replications);
  const DunnettIntegrator dunnett(config.num_treatments);
  std::vector<TrialOutcome> outcomes(replications);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < replications; r = next++) {
      outcomes[r] = run_trial(config, dgp, replicate_seed(master_seed, r), dunnett);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return outcomes;
}

SimulationSummary summarize(const std::vector<TrialOutcome>& outcomes, const TrialConfig& config) {
  SimulationSummary s;
  const int K = config.num_treatments;
  s.replications = static_cast<int>(outcomes.size());
  Eigen::VectorXd sum1 = Eigen::VectorXd::Zero(K), sq1 = Eigen::VectorXd::Zero(K);
  double sum2 = 0.0, sq2 = 0.0;
  int r1 = 0, r2 = 0, ro = 0;
  for (const TrialOutcome& o : outcomes) {
    if (!o.valid) {
      ++s.invalid;
      continue;
    }
    ++s.valid;
    r1 += o.stage1_reject;
    r2 += o.stage2_reject;
    ro += o.overall_reject;
    sum1 += o.stage1.delta_hat;
    sq1 += o.stage1.delta_hat.cwiseAbs2();
    sum2 += o.stage2.delta_hat[0];
    sq2 += o.stage2.delta_hat[0] * o.stage2.delta_hat[0];
  }
  s.delta1_mean = Eigen::VectorXd::Zero(K);
  s.delta1_sd_scaled = Eigen::VectorXd::Zero(K);
  if (s.valid == 0) return s;
  const double v = s.valid;
  auto rate_se = [v](double p) { return std::sqrt(p * (1.0 - p) / v); };
  s.stage1_rate = r1 / v;
  s.stage2_rate = r2 / v;
  s.overall_rate = ro / v;
  s.stage1_se = rate_se(s.stage1_rate);
  s.stage2_se = rate_se(s.stage2_rate);
  s.overall_se = rate_se(s.overall_rate);
  s.delta1_mean = sum1 / v;
  s.delta2_mean = sum2 / v;
  if (s.valid > 1) {
    const Eigen::VectorXd var1 = ((sq1 - v * s.delta1_mean.cwiseAbs2()) / (v - 1.0)).cwiseMax(0.0);
    s.delta1_sd_scaled = var1.cwiseSqrt() * std::sqrt(static_cast<double>(config.n1));
    const double var2 = std::max(0.0, (sq2 - v * s.delta2_mean * s.delta2_mean) / (v - 1.0));
    s.delta2_sd_scaled = std::sqrt(var2 * config.n2);
  }
  return s;
}

SimulationSummary simulate(const TrialConfig& config, const DgpSpec& dgp, int replications, int threads,
                           std::uint64_t master_seed) {
  return summarize(run_replicates(config, dgp, replications, threads, master_seed), config);
}

}  // namespace seamless
