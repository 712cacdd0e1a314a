#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Core>

namespace seamless {

class DegenerateVarianceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class TestVariant { Conventional, Robust };

/// Standard normal CDF.
double normal_cdf(double x);

/// Upper quantile of a chi-squared law: x with P(X <= x) = p.
double chi_squared_quantile(double p, double degrees_of_freedom);

struct WaldStatistics {
  Eigen::VectorXd W;
  Eigen::VectorXd se;
};

/// se_k = sqrt([G Gamma G^T]_kk / n), W_k = delta_k / se_k.
WaldStatistics wald(const Eigen::VectorXd& delta, const Eigen::MatrixXd& G, const Eigen::MatrixXd& gamma, double n);

/// Correlation matrix of G Gamma G^T.
Eigen::MatrixXd correlation(const Eigen::MatrixXd& G, const Eigen::MatrixXd& gamma);

struct DunnettResult {
  double p_value = 1.0;
  double standard_error = 0.0;
  bool repaired = false;  // R was not PSD and was clipped
};

/// Dunnett p-value P(max_k Z_k > max W) for Z ~ N(0, R), by Monte Carlo with a
/// fixed bank of standard normal draws reused across calls (common random numbers).
/// K = 1 is evaluated analytically. Immutable after construction, so one
/// integrator can serve many threads.
class DunnettIntegrator {
 public:
  static constexpr int kDefaultSamples = 100000;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed'd0e7'7000'0001ULL;

  explicit DunnettIntegrator(int dimension, int samples = kDefaultSamples, std::uint64_t seed = kDefaultSeed);

  int dimension() const { return static_cast<int>(draws_.cols()); }
  int samples() const { return static_cast<int>(draws_.rows()); }

  DunnettResult p_value(const Eigen::VectorXd& W, const Eigen::MatrixXd& R) const;
  DunnettResult p_value_at(double max_w, const Eigen::MatrixXd& R) const;

 private:
  Eigen::MatrixXd draws_;  // samples x K
};

/// Stage-2 one-sided p-value 1 - Phi(W).
double stage2_p(double W);

struct Combination {
  double statistic = 0.0;  // -log(P1 P2)
  double threshold = 0.0;  // chi2_4(1 - alpha) / 2
  bool reject = false;
};

/// Inverse chi-squared combination of two stage-wise p-values.
Combination combine(double p1, double p2, double alpha);

}  // namespace seamless
