#include "seamless/variance.hpp"

#include <string>

namespace seamless {

Eigen::MatrixXd GammaDecomposition::robust_guarded(bool& guarded) const {
  Eigen::MatrixXd total = robust();
  const Eigen::MatrixXd fallback = conv();
  guarded = false;
  for (Eigen::Index k = 0; k < total.rows(); ++k) {
    if (!(total(k, k) > 0.0)) {
      total(k, k) = fallback(k, k);
      guarded = true;
    }
  }
  return total;
}

namespace {

struct ArmMoments {
  Eigen::VectorXd count;
  Eigen::VectorXd mean;
  Eigen::VectorXd var;  // divisor n_k
};

ArmMoments arm_moments(const TrialDataset& data) {
  const int k1 = data.num_arms;
  ArmMoments m{Eigen::VectorXd::Zero(k1), Eigen::VectorXd::Zero(k1), Eigen::VectorXd::Zero(k1)};
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    m.count[data.arm[i]] += 1.0;
    m.mean[data.arm[i]] += data.outcome[i];
  }
  for (int a = 0; a < k1; ++a) {
    if (m.count[a] <= 1.0) throw DegenerateDataError("arm " + std::to_string(a) + " has fewer than two patients");
  }
  m.mean.array() /= m.count.array();
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const double d = data.outcome[i] - m.mean[data.arm[i]];
    m.var[data.arm[i]] += d * d;
  }
  m.var.array() /= m.count.array();
  return m;
}

}  // namespace

Eigen::MatrixXd gamma_base(const TrialDataset& data, const MuEstimate&) {
  const ArmMoments m = arm_moments(data);
  const double n = static_cast<double>(data.size());
  return (m.var.array() * n / m.count.array()).matrix().asDiagonal();
}

Eigen::MatrixXd gamma_adj(const TrialDataset& data, const MuEstimate& mu) {
  const ArmMoments m = arm_moments(data);
  const int k1 = data.num_arms;
  const double n = static_cast<double>(data.size());

  Eigen::VectorXd resid_var = Eigen::VectorXd::Zero(k1);
  Eigen::MatrixXd cov_yh = Eigen::MatrixXd::Zero(k1, k1);  // row k: Cov(Y(k), h)
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int a = data.arm[i];
    resid_var[a] += mu.residuals[i] * mu.residuals[i];
    cov_yh.row(a) += (data.outcome[i] - m.mean[a]) * mu.h_matrix.row(i);
  }
  resid_var.array() /= m.count.array();
  cov_yh.array().colwise() /= m.count.array();

  const Eigen::MatrixXd centered = mu.h_matrix.rowwise() - mu.h_matrix.colwise().mean();
  const Eigen::MatrixXd var_h = centered.transpose() * centered / n;

  Eigen::MatrixXd adj = var_h - cov_yh - cov_yh.transpose();
  adj.diagonal().array() += (m.var - resid_var).array() * n / m.count.array();
  return adj;
}

StratumResidualMeans stratum_residual_means(const TrialDataset& data, const MuEstimate& mu) {
  const int k1 = data.num_arms, s_max = data.stratum_count;
  const double n = static_cast<double>(data.size());
  StratumResidualMeans out;
  out.L_hat = Eigen::MatrixXd::Zero(s_max, k1);
  Eigen::MatrixXd cell_count = Eigen::MatrixXd::Zero(s_max, k1);
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    const int s = data.stratum[i], a = data.arm[i];
    if (s < 0 || s >= s_max) throw InputError("stratum index out of range");
    out.L_hat(s, a) += mu.residuals[i];
    cell_count(s, a) += 1.0;
  }
  for (int s = 0; s < s_max; ++s) {
    for (int a = 0; a < k1; ++a) {
      out.L_hat(s, a) = cell_count(s, a) > 0.0 ? out.L_hat(s, a) / cell_count(s, a) : 0.0;
    }
  }
  out.pi_hat_s = cell_count.rowwise().sum() / n;
  out.pi_hat_k = cell_count.colwise().sum().transpose() / n;
  return out;
}

SigmaBlocks sigma_cr(const Eigen::VectorXd& pi_hat_s, int num_arms) {
  SigmaBlocks out;
  out.values = cr_imbalance_covariance(pi_hat_s, num_arms);
  out.kind = SigmaBlocks::Kind::ClosedFormCR;
  out.num_arms = num_arms;
  out.stratum_count = static_cast<int>(pi_hat_s.size());
  return out;
}

void for_each_bootstrap_imbalance(std::span<const int> stratum_sample, const BootstrapDesign& design,
                                  int replicates, std::uint64_t seed,
                                  const std::function<void(int, const Eigen::MatrixXd&)>& visit) {
  if (replicates < 2) throw std::invalid_argument("bootstrap needs at least two replicates");
  if (stratum_sample.empty()) throw std::invalid_argument("bootstrap needs a nonempty stratum sample");
  const int s_max = design.schema.stratum_count();
  std::vector<std::vector<int>> levels(s_max);
  for (int s = 0; s < s_max; ++s) levels[s] = design.schema.levels_of(s);

  Randomizer randomizer(design.scheme, design.params, design.num_arms, design.schema);
  const std::uint64_t n = stratum_sample.size();
  for (int b = 0; b < replicates; ++b) {
    Engine rng = make_engine(seed, static_cast<std::uint64_t>(b));
    randomizer.reset();
    for (std::uint64_t i = 0; i < n; ++i) {
      const int s = stratum_sample[uniform_index(rng, n)];
      randomizer.assign(s, levels[s], rng);
    }
    visit(b, randomizer.imbalance());
  }
}

SigmaBlocks sigma_car_bootstrap(std::span<const int> stratum_sample, const BootstrapDesign& design, int replicates,
                                std::uint64_t seed) {
  const int k1 = design.num_arms, s_max = design.schema.stratum_count();
  const Eigen::Index dim = static_cast<Eigen::Index>(k1) * s_max;
  Eigen::MatrixXd draws(replicates, dim);
  for_each_bootstrap_imbalance(stratum_sample, design, replicates, seed, [&](int b, const Eigen::MatrixXd& d) {
    // column-major storage of (K+1) x s_max is exactly vec index s*(K+1)+k
    draws.row(b) = Eigen::Map<const Eigen::RowVectorXd>(d.data(), dim);
  });
  const Eigen::RowVectorXd mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const double n = static_cast<double>(stratum_sample.size());

  SigmaBlocks out;
  out.values = centered.transpose() * centered / (static_cast<double>(replicates) * n);
  out.kind = SigmaBlocks::Kind::Bootstrap;
  out.num_arms = k1;
  out.stratum_count = s_max;
  return out;
}

Eigen::MatrixXd residual_loading(const StratumResidualMeans& L) {
  const Eigen::Index s_max = L.L_hat.rows(), k1 = L.L_hat.cols();
  Eigen::MatrixXd loading = Eigen::MatrixXd::Zero(s_max * k1, k1);
  for (Eigen::Index s = 0; s < s_max; ++s) {
    for (Eigen::Index k = 0; k < k1; ++k) {
      if (L.pi_hat_k[k] > 0.0) loading(s * k1 + k, k) = L.L_hat(s, k) / L.pi_hat_k[k];
    }
  }
  return loading;
}

Eigen::MatrixXd gamma_car_adj(const StratumResidualMeans& L, const SigmaBlocks& sigma_cr,
                              const SigmaBlocks& sigma_car) {
  const Eigen::MatrixXd loading = residual_loading(L);
  if (sigma_cr.values.rows() != loading.rows() || sigma_car.values.rows() != loading.rows() ||
      sigma_cr.values.cols() != loading.rows() || sigma_car.values.cols() != loading.rows()) {
    throw std::invalid_argument("imbalance covariance does not match the residual loading dimensions");
  }
  return loading.transpose() * (sigma_cr.values - sigma_car.values) * loading;
}

Eigen::MatrixXd gamma_car_streaming(const StratumResidualMeans& L, std::span<const int> stratum_sample,
                                    const BootstrapDesign& design, int replicates, std::uint64_t seed) {
  const Eigen::MatrixXd loading = residual_loading(L);
  const Eigen::Index k1 = loading.cols();
  if (loading.rows() != static_cast<Eigen::Index>(design.num_arms) * design.schema.stratum_count()) {
    throw std::invalid_argument("bootstrap design does not match the residual loading dimensions");
  }
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(k1);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(k1, k1);
  for_each_bootstrap_imbalance(stratum_sample, design, replicates, seed, [&](int, const Eigen::MatrixXd& d) {
    const Eigen::VectorXd o = loading.transpose() * Eigen::Map<const Eigen::VectorXd>(d.data(), d.size());
    sum += o;
    cross.noalias() += o * o.transpose();
  });
  const double b = static_cast<double>(replicates), n = static_cast<double>(stratum_sample.size());
  const Eigen::VectorXd mean = sum / b;
  return (cross / b - mean * mean.transpose()) / n;
}

}  // namespace seamless
