#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "seamless/inference.hpp"
#include "seamless/rng.hpp"

using namespace seamless;

namespace {

// P(max_k Z_k > c) for K equicorrelated standard normals with correlation rho >= 0,
// by conditioning on the shared factor and Simpson's rule.
double equicorrelated_exceedance(double c, double rho, int K) {
  const int m = 4000;
  const double lo = -10.0, hi = 10.0, h = (hi - lo) / m;
  auto f = [&](double z) {
    const double inner = 0.5 * std::erfc(-((c - std::sqrt(rho) * z) / std::sqrt(1.0 - rho)) / std::sqrt(2.0));
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI) * std::pow(inner, K);
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < m; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return 1.0 - s * h / 3.0;
}

Eigen::MatrixXd equicorrelation(int K, double rho) {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(K, K, rho);
  r.diagonal().setOnes();
  return r;
}

}  // namespace

TEST_CASE("Wald statistics") {
  const Eigen::MatrixXd G = Eigen::MatrixXd::Identity(2, 2);
  const WaldStatistics w = wald(Eigen::Vector2d(0.2, -0.1), G, 4.0 * Eigen::MatrixXd::Identity(2, 2), 400.0);
  CHECK(w.se[0] == doctest::Approx(0.1));
  CHECK(w.W[0] == doctest::Approx(2.0));
  CHECK(w.W[1] == doctest::Approx(-1.0));

  const WaldStatistics zero = wald(Eigen::Vector2d::Zero(), G, Eigen::Matrix2d::Identity(), 100.0);
  CHECK(zero.W.cwiseAbs().maxCoeff() == 0.0);

  Eigen::Matrix2d bad = Eigen::Matrix2d::Identity();
  bad(1, 1) = 0.0;
  CHECK_THROWS_AS(wald(Eigen::Vector2d(0.1, 0.1), G, bad, 100.0), DegenerateVarianceError);
  bad(1, 1) = -1.0;
  CHECK_THROWS_AS(wald(Eigen::Vector2d(0.1, 0.1), G, bad, 100.0), DegenerateVarianceError);
}

TEST_CASE("correlation of the effect covariance") {
  const Eigen::MatrixXd I2 = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::Matrix2d diag = Eigen::Vector2d(3.0, 0.5).asDiagonal();
  CHECK((correlation(I2, diag) - I2).cwiseAbs().maxCoeff() < 1e-15);

  Eigen::Matrix2d v;
  v << 4.0, 1.0, 1.0, 9.0;
  CHECK(correlation(I2, v)(0, 1) == doctest::Approx(1.0 / 6.0));

  // differences against a shared control with equal arm variances
  Eigen::MatrixXd G(2, 3);
  G << -1, 1, 0, -1, 0, 1;
  const Eigen::MatrixXd R = correlation(G, 0.7 * Eigen::MatrixXd::Identity(3, 3));
  CHECK(R(0, 1) == doctest::Approx(0.5));
  CHECK(R(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("single comparison is evaluated analytically") {
  const DunnettIntegrator one(1, 1000);
  for (double w : {-1.0, 0.0, 1.0, 1.645, 3.0}) {
    const DunnettResult r = one.p_value(Eigen::VectorXd::Constant(1, w), Eigen::MatrixXd::Identity(1, 1));
    CHECK(r.p_value == doctest::Approx(1.0 - oracle::normal_cdf_quadrature(w)).epsilon(1e-9));
    CHECK(r.standard_error == 0.0);
  }
}

TEST_CASE("Dunnett Monte Carlo agrees with quadrature within 3 standard errors") {
  const DunnettIntegrator two(2);
  const DunnettResult at = two.p_value(Eigen::Vector2d(1.645, 0.3), Eigen::Matrix2d::Identity());
  const double exact = 1.0 - std::pow(oracle::normal_cdf_quadrature(1.645), 2);
  CHECK(exact == doctest::Approx(0.0974).epsilon(1e-3));
  CHECK(std::abs(at.p_value - exact) <= 3.0 * at.standard_error);
  CHECK(at.standard_error <= 0.5 / std::sqrt(two.samples()));

  Engine rng(2024);
  std::uniform_real_distribution<double> wdist(-0.5, 3.5), rdist(0.0, 0.9);
  int outside = 0;
  for (int t = 0; t < 50; ++t) {
    const int K = 2 + t % 2;
    const DunnettIntegrator mc(K);
    const double c = wdist(rng), rho = rdist(rng);
    const DunnettResult r = mc.p_value_at(c, equicorrelation(K, rho));
    const double ref = equicorrelated_exceedance(c, rho, K);
    if (std::abs(r.p_value - ref) > 3.0 * r.standard_error + 1e-12) {
      ++outside;
      MESSAGE("K=", K, " c=", c, " rho=", rho, " mc=", r.p_value, " ref=", ref, " se=", r.standard_error);
    }
    CHECK(r.standard_error <= 0.5 / std::sqrt(mc.samples()));
  }
  CHECK(outside == 0);
}

TEST_CASE("Dunnett edge cases") {
  const DunnettIntegrator two(2);
  const DunnettResult far = two.p_value_at(std::numeric_limits<double>::infinity(), Eigen::Matrix2d::Identity());
  CHECK(far.p_value == 0.0);
  CHECK(two.p_value_at(-40.0, Eigen::Matrix2d::Identity()).p_value == 1.0);

  Eigen::Matrix3d bad;
  bad << 1.0, 0.99, -0.99, 0.99, 1.0, 0.99, -0.99, 0.99, 1.0;
  const DunnettIntegrator three(3, 20000);
  const DunnettResult r = three.p_value_at(1.5, bad);
  CHECK(r.repaired);
  CHECK(r.p_value >= 0.0);
  CHECK(r.p_value <= 1.0);
  CHECK_FALSE(three.p_value_at(1.5, equicorrelation(3, 0.5)).repaired);

  // same draws every call, and P1 falls as max W grows
  const Eigen::Matrix2d R = equicorrelation(2, 0.5);
  CHECK(two.p_value_at(1.2, R).p_value == two.p_value_at(1.2, R).p_value);
  double previous = 1.0;
  for (double c = -2.0; c <= 4.0; c += 0.25) {
    const double p = two.p_value_at(c, R).p_value;
    CHECK(p <= previous);
    previous = p;
  }
  CHECK(two.p_value(Eigen::Vector2d(0.4, 2.0), R).p_value == two.p_value_at(2.0, R).p_value);
}

TEST_CASE("stage-two p-value") {
  CHECK(stage2_p(0.0) == doctest::Approx(0.5));
  CHECK(stage2_p(1.96) == doctest::Approx(1.0 - oracle::normal_cdf_quadrature(1.96)).epsilon(1e-10));
  CHECK(stage2_p(-std::numeric_limits<double>::infinity()) == 1.0);
  CHECK(stage2_p(std::numeric_limits<double>::infinity()) == 0.0);
  for (double x : {-5.0, -1.0, 0.3, 2.5, 6.0}) {
    CHECK(normal_cdf(x) == doctest::Approx(oracle::normal_cdf_quadrature(x)).epsilon(1e-10));
  }
}

TEST_CASE("inverse chi-squared combination") {
  const Combination base = combine(0.5, 0.5, 0.05);
  CHECK(std::abs(base.threshold - oracle::chi2_4_quantile(0.95) / 2.0) < 5e-5);
  CHECK(std::round(base.threshold * 1e4) / 1e4 == doctest::Approx(4.7439));
  CHECK(chi_squared_quantile(0.95, 4.0) == doctest::Approx(oracle::chi2_4_quantile(0.95)).epsilon(1e-10));

  const Combination strong = combine(0.01, 0.01, 0.05);
  CHECK(strong.statistic == doctest::Approx(9.2103).epsilon(1e-4));
  CHECK(strong.reject);
  CHECK(combine(1.0, 1.0, 0.05).statistic == 0.0);
  CHECK_FALSE(combine(1.0, 1.0, 0.05).reject);
  const Combination zero = combine(0.0, 0.4, 0.05);
  CHECK(std::isinf(zero.statistic));
  CHECK(zero.reject);

  // boundary: P1 P2 = exp(-threshold)
  const double edge = std::exp(-base.threshold);
  CHECK(combine(std::sqrt(edge) * 0.999, std::sqrt(edge), 0.05).reject);
  CHECK_FALSE(combine(std::sqrt(edge) * 1.001, std::sqrt(edge), 0.05).reject);

  // non-increasing in either p-value
  double previous = std::numeric_limits<double>::infinity();
  for (double p = 0.001; p < 1.0; p += 0.05) {
    const double s = combine(p, 0.2, 0.05).statistic;
    CHECK(s <= previous);
    previous = s;
  }
}
