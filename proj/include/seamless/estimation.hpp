#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace seamless {

enum class Link { Logit, Identity };
enum class Metric { LogRR, LOR, ATE };

std::string_view to_string(Metric metric);
Metric parse_metric(std::string_view name);

class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Newton iteration failed; carries the last iterate for diagnosis.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, Eigen::VectorXd iterate, int iterations)
      : std::runtime_error(what), iterate_(std::move(iterate)), iterations_(iterations) {}
  const Eigen::VectorXd& iterate() const { return iterate_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::VectorXd iterate_;
  int iterations_;
};

template <typename Scalar>
Scalar inverse_link(Link link, Scalar eta) {
  using std::exp;
  if (link == Link::Identity) return eta;
  return Scalar(1) / (Scalar(1) + exp(-eta));
}

/// d gamma^{-1}(eta) / d eta.
template <typename Scalar>
Scalar inverse_link_derivative(Link link, Scalar eta) {
  if (link == Link::Identity) return Scalar(1);
  const Scalar p = inverse_link(link, eta);
  return p * (Scalar(1) - p);
}

template <typename Scalar>
Scalar apply_link(Link link, Scalar mu) {
  using std::log;
  if (link == Link::Identity) return mu;
  return log(mu / (Scalar(1) - mu));
}

/// Per-patient records for one stage. Arms are local indices 0..num_arms-1
/// with 0 the control.
struct TrialDataset {
  Eigen::MatrixXd covariates;  // n x p, every baseline covariate
  Eigen::VectorXd outcome;
  std::vector<int> arm;
  std::vector<int> stratum;
  int num_arms = 0;
  int stratum_count = 1;

  Eigen::Index size() const { return outcome.size(); }
  Eigen::VectorXi arm_counts() const;
};

/// GLM working model with arm-specific intercepts and shared slopes on the
/// selected covariate columns.
struct WorkingModel {
  Link link = Link::Logit;
  int num_arms = 0;
  std::vector<int> covariate_columns;

  int q() const { return static_cast<int>(covariate_columns.size()); }
  int dim() const { return num_arms + q(); }
};

struct FitOptions {
  double tol = 1e-9;       // max-norm of the estimating equation scaled by 1/n
  int max_iter = 50;
  double step_tol = 1e-6;  // max-norm of the final Newton step
  double eta_bound = 30.0; // linear predictors beyond this signal separation
};

struct ThetaEstimate {
  Eigen::VectorXd iota;
  Eigen::VectorXd beta_x;
  bool converged = false;
  int iterations = 0;
  double final_residual_norm = 0.0;

  Eigen::VectorXd theta() const;
  static ThetaEstimate from_theta(const Eigen::VectorXd& theta, int num_arms);
};

struct MuEstimate {
  Eigen::VectorXd mu;        // K+1
  Eigen::MatrixXd h_matrix;  // n x (K+1), h^k(X_i; theta)
  Eigen::VectorXd residuals; // Y_i - h^{arm_i}(X_i; theta)
};

/// n x q matrix of the covariates that enter the working model.
Eigen::MatrixXd model_covariates(const TrialDataset& data, const WorkingModel& model);

/// Stacked estimating function sum_i sum_k T_i^k psi^k(Y_i, X_i; theta),
/// mean rows (h - Y), slope rows (Y - h) X.
Eigen::VectorXd estimating_function(const Eigen::VectorXd& theta, const TrialDataset& data,
                                    const WorkingModel& model);

/// Analytic derivative of estimating_function with respect to theta.
Eigen::MatrixXd estimating_jacobian(const Eigen::VectorXd& theta, const TrialDataset& data,
                                    const WorkingModel& model);

ThetaEstimate fit(const TrialDataset& data, const WorkingModel& model, const FitOptions& options = {});

MuEstimate estimate_mu(const ThetaEstimate& theta, const TrialDataset& data, const WorkingModel& model);

/// g on the scale of the chosen effect metric.
template <typename Scalar>
Scalar metric_transform(Metric metric, Scalar mu) {
  using std::log;
  switch (metric) {
    case Metric::LogRR:
      if (!(mu > Scalar(0))) throw DomainError("log relative risk needs a positive mean");
      return log(mu);
    case Metric::LOR:
      if (!(mu > Scalar(0) && mu < Scalar(1))) throw DomainError("log odds ratio needs a mean inside (0, 1)");
      return log(mu / (Scalar(1) - mu));
    case Metric::ATE:
      return mu;
  }
  return mu;
}

template <typename Scalar>
Scalar metric_derivative(Metric metric, Scalar mu) {
  switch (metric) {
    case Metric::LogRR:
      if (!(mu > Scalar(0))) throw DomainError("log relative risk needs a positive mean");
      return Scalar(1) / mu;
    case Metric::LOR:
      if (!(mu > Scalar(0) && mu < Scalar(1))) throw DomainError("log odds ratio needs a mean inside (0, 1)");
      return Scalar(1) / (mu * (Scalar(1) - mu));
    case Metric::ATE:
      return Scalar(1);
  }
  return Scalar(1);
}

/// delta_k = g(mu_k) - g(mu_0), k = 1..K.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> effect(const Eigen::MatrixBase<Derived>& mu,
                                                                  Metric metric) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index k = mu.size() - 1;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> delta(k);
  const Scalar base = metric_transform(metric, mu(0));
  for (Eigen::Index j = 0; j < k; ++j) delta(j) = metric_transform(metric, mu(j + 1)) - base;
  return delta;
}

}  // namespace seamless
