#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>

#include <Eigen/Core>

#include "seamless/estimation.hpp"
#include "seamless/randomization.hpp"

namespace seamless {

class DegenerateDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Estimated pieces of Gamma = base - adj - car_adj, each (K+1) x (K+1).
struct GammaDecomposition {
  Eigen::MatrixXd base;
  Eigen::MatrixXd adj;
  Eigen::MatrixXd car_adj;

  Eigen::MatrixXd conv() const { return base - adj; }
  Eigen::MatrixXd robust() const { return base - adj - car_adj; }

  /// Robust total with nonpositive diagonal entries replaced by the
  /// conventional ones; `guarded` reports whether that happened.
  Eigen::MatrixXd robust_guarded(bool& guarded) const;
};

/// Covariance of vec(D_n / sqrt(n)), entry (s*(K+1)+k, s'*(K+1)+k').
struct SigmaBlocks {
  enum class Kind { ClosedFormCR, Bootstrap };
  Eigen::MatrixXd values;
  Kind kind = Kind::ClosedFormCR;
  int num_arms = 0;
  int stratum_count = 0;

  Eigen::Index index(int stratum, int arm) const { return static_cast<Eigen::Index>(stratum) * num_arms + arm; }
  auto block(int s, int s2) const { return values.block(index(s, 0), index(s2, 0), num_arms, num_arms); }
};

struct StratumResidualMeans {
  Eigen::MatrixXd L_hat;    // s_max x (K+1); empty cells are 0
  Eigen::VectorXd pi_hat_s; // stratum frequencies
  Eigen::VectorXd pi_hat_k; // arm frequencies
};

Eigen::MatrixXd gamma_base(const TrialDataset& data, const MuEstimate& mu);
Eigen::MatrixXd gamma_adj(const TrialDataset& data, const MuEstimate& mu);
StratumResidualMeans stratum_residual_means(const TrialDataset& data, const MuEstimate& mu);

/// Multinomial covariance of (T - 1/(K+1)) stacked block-diagonally over strata.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> cr_imbalance_covariance(
    const Eigen::MatrixBase<Derived>& pi_s, int num_arms) {
  using Scalar = typename Derived::Scalar;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index s_max = pi_s.size();
  const Scalar share = Scalar(1) / Scalar(num_arms);
  const Mat unit = share * Mat::Identity(num_arms, num_arms) - share * share * Mat::Ones(num_arms, num_arms);
  Mat sigma = Mat::Zero(s_max * num_arms, s_max * num_arms);
  for (Eigen::Index s = 0; s < s_max; ++s) {
    sigma.block(s * num_arms, s * num_arms, num_arms, num_arms) = pi_s(s) * unit;
  }
  return sigma;
}

SigmaBlocks sigma_cr(const Eigen::VectorXd& pi_hat_s, int num_arms);

/// What the bootstrap re-runs: the trial's own CAR procedure.
struct BootstrapDesign {
  Scheme scheme = Scheme::CR;
  SchemeParams params;
  StratumSchema schema;
  int num_arms = 0;
};

/// Runs B bootstrap replicates; replicate b resamples n strata from the
/// observed sample, re-randomizes them and passes D*_b (K+1 x s_max) to `visit`.
/// Replicate b draws from its own substream derived from (seed, b).
void for_each_bootstrap_imbalance(std::span<const int> stratum_sample, const BootstrapDesign& design,
                                  int replicates, std::uint64_t seed,
                                  const std::function<void(int, const Eigen::MatrixXd&)>& visit);

SigmaBlocks sigma_car_bootstrap(std::span<const int> stratum_sample, const BootstrapDesign& design, int replicates,
                                std::uint64_t seed);

/// s_max(K+1) x (K+1) loading matrix; row (s, k) holds L(s,k) / pi(k) in column k.
Eigen::MatrixXd residual_loading(const StratumResidualMeans& L);

/// Double-sum form: L~^T (Sigma_CR - Sigma_CAR) L~.
Eigen::MatrixXd gamma_car_adj(const StratumResidualMeans& L, const SigmaBlocks& sigma_cr,
                              const SigmaBlocks& sigma_car);

/// The CAR term L~^T Sigma_CAR L~ computed from O_b = L~^T vec(D*_b) without
/// forming Sigma_CAR. Same draws as sigma_car_bootstrap for the same seed.
Eigen::MatrixXd gamma_car_streaming(const StratumResidualMeans& L, std::span<const int> stratum_sample,
                                    const BootstrapDesign& design, int replicates, std::uint64_t seed);

/// G = d delta / d mu, K x (K+1): row k is (-g'(mu_0), 0.., g'(mu_k), ..0).
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> metric_jacobian(
    const Eigen::MatrixBase<Derived>& mu, Metric metric) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index k = mu.size() - 1;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> g =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(k, k + 1);
  g.col(0).setConstant(-metric_derivative(metric, mu(0)));
  for (Eigen::Index j = 0; j < k; ++j) g(j, j + 1) = metric_derivative(metric, mu(j + 1));
  return g;
}

}  // namespace seamless
