#include "seamless/inference.hpp"

#include <cmath>
#include <iostream>
#include <limits>
#include <random>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include "seamless/rng.hpp"

namespace seamless {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double chi_squared_quantile(double p, double degrees_of_freedom) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(degrees_of_freedom), p);
}

WaldStatistics wald(const Eigen::VectorXd& delta, const Eigen::MatrixXd& G, const Eigen::MatrixXd& gamma, double n) {
  const Eigen::VectorXd var = (G * gamma * G.transpose()).diagonal();
  for (Eigen::Index k = 0; k < var.size(); ++k) {
    if (!(var[k] > 0.0)) {
      throw DegenerateVarianceError("nonpositive variance for contrast " + std::to_string(k + 1));
    }
  }
  WaldStatistics out;
  out.se = (var / n).cwiseSqrt();
  out.W = delta.cwiseQuotient(out.se);
  return out;
}

Eigen::MatrixXd correlation(const Eigen::MatrixXd& G, const Eigen::MatrixXd& gamma) {
  const Eigen::MatrixXd cov = G * gamma * G.transpose();
  const Eigen::VectorXd var = cov.diagonal();
  if ((var.array() <= 0.0).any() || !var.allFinite()) {
    throw DegenerateVarianceError("correlation needs positive contrast variances");
  }
  const Eigen::VectorXd inv_sd = var.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd r = inv_sd.asDiagonal() * cov * inv_sd.asDiagonal();
  r.diagonal().setOnes();
  return r.cwiseMax(-1.0).cwiseMin(1.0);
}

DunnettIntegrator::DunnettIntegrator(int dimension, int samples, std::uint64_t seed) {
  if (dimension < 1) throw std::invalid_argument("Dunnett dimension must be positive");
  if (samples < 1) throw std::invalid_argument("Dunnett sample count must be positive");
  draws_.resize(samples, dimension);
  if (dimension == 1) return;
  Engine rng(seed);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < draws_.rows(); ++i) {
    for (Eigen::Index k = 0; k < draws_.cols(); ++k) draws_(i, k) = normal(rng);
  }
}

DunnettResult DunnettIntegrator::p_value(const Eigen::VectorXd& W, const Eigen::MatrixXd& R) const {
  return p_value_at(W.maxCoeff(), R);
}

DunnettResult DunnettIntegrator::p_value_at(double max_w, const Eigen::MatrixXd& R) const {
  const Eigen::Index k = R.rows();
  if (k != dimension() || R.cols() != k) throw std::invalid_argument("correlation matrix has the wrong size");
  DunnettResult out;
  if (k == 1) {
    out.p_value = 1.0 - normal_cdf(max_w);
    return out;
  }
  if (std::isnan(max_w)) throw std::invalid_argument("Dunnett statistic is NaN");

  Eigen::MatrixXd factor;
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() == Eigen::Success) {
    factor = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(R);
    const Eigen::VectorXd clipped = eig.eigenvalues().cwiseMax(1e-10);
    factor = eig.eigenvectors() * clipped.cwiseSqrt().asDiagonal();
    out.repaired = true;
    std::cerr << "warning: Dunnett correlation matrix was not positive semidefinite; eigenvalues clipped\n";
  }

  const Eigen::MatrixXd correlated = draws_ * factor.transpose();
  Eigen::Index below = 0;
  for (Eigen::Index i = 0; i < correlated.rows(); ++i) below += correlated.row(i).maxCoeff() <= max_w;
  const double n = static_cast<double>(correlated.rows());
  const double p = 1.0 - static_cast<double>(below) / n;
  out.p_value = p;
  out.standard_error = std::sqrt(p * (1.0 - p) / n);
  return out;
}

double stage2_p(double W) { return 1.0 - normal_cdf(W); }

Combination combine(double p1, double p2, double alpha) {
  if (!(p1 >= 0.0 && p1 <= 1.0 && p2 >= 0.0 && p2 <= 1.0)) {
    throw std::invalid_argument("stage-wise p-values must lie in [0, 1]");
  }
  Combination out;
  out.threshold = 0.5 * chi_squared_quantile(1.0 - alpha, 4.0);
  const double product = p1 * p2;
  out.statistic = product > 0.0 ? -std::log(product) : std::numeric_limits<double>::infinity();
  out.reject = out.statistic > out.threshold;
  return out;
}

}  // namespace seamless
