#include "seamless/estimation.hpp"

#include <algorithm>
#include <limits>

#include <Eigen/LU>

namespace seamless {

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::LogRR: return "logrr";
    case Metric::LOR: return "lor";
    case Metric::ATE: return "ate";
  }
  return "?";
}

Metric parse_metric(std::string_view name) {
  if (name == "logrr") return Metric::LogRR;
  if (name == "lor") return Metric::LOR;
  if (name == "ate") return Metric::ATE;
  throw std::invalid_argument("unknown effect metric: " + std::string(name));
}

Eigen::VectorXi TrialDataset::arm_counts() const {
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(num_arms);
  for (int a : arm) ++counts[a];
  return counts;
}

Eigen::VectorXd ThetaEstimate::theta() const {
  Eigen::VectorXd t(iota.size() + beta_x.size());
  t << iota, beta_x;
  return t;
}

ThetaEstimate ThetaEstimate::from_theta(const Eigen::VectorXd& theta, int num_arms) {
  ThetaEstimate est;
  est.iota = theta.head(num_arms);
  est.beta_x = theta.tail(theta.size() - num_arms);
  return est;
}

Eigen::MatrixXd model_covariates(const TrialDataset& data, const WorkingModel& model) {
  Eigen::MatrixXd x(data.size(), model.q());
  for (int j = 0; j < model.q(); ++j) {
    const int col = model.covariate_columns[j];
    if (col < 0 || col >= data.covariates.cols()) throw InputError("working-model covariate column out of range");
    x.col(j) = data.covariates.col(col);
  }
  return x;
}

namespace {

void check_dataset(const TrialDataset& data, const WorkingModel& model) {
  if (model.num_arms != data.num_arms) throw InputError("working model and dataset disagree on arm count");
  if (static_cast<Eigen::Index>(data.arm.size()) != data.size() || data.covariates.rows() != data.size()) {
    throw InputError("dataset columns differ in length");
  }
  for (int a : data.arm) {
    if (a < 0 || a >= data.num_arms) throw InputError("arm index out of range");
  }
}

// Linear predictor of every patient at their assigned arm.
Eigen::VectorXd assigned_eta(const Eigen::VectorXd& theta, const TrialDataset& data, const Eigen::MatrixXd& x) {
  Eigen::VectorXd eta = x * theta.tail(x.cols());
  for (Eigen::Index i = 0; i < eta.size(); ++i) eta[i] += theta[data.arm[i]];
  return eta;
}

Eigen::VectorXd stacked_function(const Eigen::VectorXd& theta, const TrialDataset& data, const WorkingModel& model,
                                 const Eigen::MatrixXd& x) {
  const Eigen::VectorXd eta = assigned_eta(theta, data, x);
  Eigen::VectorXd resid(eta.size());  // h - Y
  for (Eigen::Index i = 0; i < eta.size(); ++i) resid[i] = inverse_link(model.link, eta[i]) - data.outcome[i];
  Eigen::VectorXd u = Eigen::VectorXd::Zero(model.dim());
  for (Eigen::Index i = 0; i < eta.size(); ++i) u[data.arm[i]] += resid[i];
  u.tail(model.q()) = -(x.transpose() * resid);
  return u;
}

Eigen::MatrixXd stacked_jacobian(const Eigen::VectorXd& theta, const TrialDataset& data, const WorkingModel& model,
                                 const Eigen::MatrixXd& x) {
  const int k1 = model.num_arms, q = model.q();
  const Eigen::VectorXd eta = assigned_eta(theta, data, x);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(model.dim(), model.dim());
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double w = inverse_link_derivative(model.link, eta[i]);
    const int a = data.arm[i];
    jac(a, a) += w;
    if (q > 0) {
      const auto xi = x.row(i);
      jac.block(a, k1, 1, q) += w * xi;
      jac.block(k1, a, q, 1) -= w * xi.transpose();
      jac.block(k1, k1, q, q).noalias() -= w * xi.transpose() * xi;
    }
  }
  return jac;
}

}  // namespace

Eigen::VectorXd estimating_function(const Eigen::VectorXd& theta, const TrialDataset& data,
                                    const WorkingModel& model) {
  check_dataset(data, model);
  return stacked_function(theta, data, model, model_covariates(data, model));
}

Eigen::MatrixXd estimating_jacobian(const Eigen::VectorXd& theta, const TrialDataset& data,
                                    const WorkingModel& model) {
  check_dataset(data, model);
  return stacked_jacobian(theta, data, model, model_covariates(data, model));
}

ThetaEstimate fit(const TrialDataset& data, const WorkingModel& model, const FitOptions& options) {
  check_dataset(data, model);
  const Eigen::Index n = data.size();
  const int k1 = model.num_arms;
  if (n <= model.dim()) throw InputError("need more patients than parameters");

  const Eigen::VectorXi counts = data.arm_counts();
  Eigen::VectorXd arm_sum = Eigen::VectorXd::Zero(k1);
  for (Eigen::Index i = 0; i < n; ++i) arm_sum[data.arm[i]] += data.outcome[i];
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(model.dim());
  for (int a = 0; a < k1; ++a) {
    if (counts[a] == 0) throw InputError("arm " + std::to_string(a) + " has no patients");
    const double mean = arm_sum[a] / counts[a];
    theta[a] = model.link == Link::Logit ? apply_link(model.link, std::clamp(mean, 0.01, 0.99)) : mean;
  }

  const Eigen::MatrixXd x = model_covariates(data, model);
  const double scale = 1.0 / static_cast<double>(n);
  Eigen::VectorXd u = stacked_function(theta, data, model, x);
  double norm = u.lpNorm<Eigen::Infinity>() * scale;
  double step_norm = std::numeric_limits<double>::infinity();

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Eigen::MatrixXd jac = stacked_jacobian(theta, data, model, x);
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const Eigen::VectorXd step = lu.solve(u);
    if (!step.allFinite()) throw FitError("singular Newton system", theta, iter);

    double t = 1.0;
    Eigen::VectorXd candidate = theta - step;
    Eigen::VectorXd u_new = stacked_function(candidate, data, model, x);
    double norm_new = u_new.lpNorm<Eigen::Infinity>() * scale;
    for (int halving = 0; halving < 30 && !(norm_new < norm); ++halving) {
      t *= 0.5;
      candidate = theta - t * step;
      u_new = stacked_function(candidate, data, model, x);
      norm_new = u_new.lpNorm<Eigen::Infinity>() * scale;
    }
    step_norm = (t * step).lpNorm<Eigen::Infinity>();
    theta = candidate;
    u = u_new;
    norm = norm_new;

    if (model.link == Link::Logit &&
        assigned_eta(theta, data, x).lpNorm<Eigen::Infinity>() > options.eta_bound) {
      throw FitError("linear predictor diverged (separation)", theta, iter);
    }
    if (norm <= options.tol && step_norm <= options.step_tol * (1.0 + theta.lpNorm<Eigen::Infinity>())) {
      ThetaEstimate est = ThetaEstimate::from_theta(theta, k1);
      est.converged = true;
      est.iterations = iter;
      est.final_residual_norm = norm;
      return est;
    }
  }
  throw FitError("Newton iteration did not converge in " + std::to_string(options.max_iter) + " iterations",
                 theta, options.max_iter);
}

MuEstimate estimate_mu(const ThetaEstimate& theta, const TrialDataset& data, const WorkingModel& model) {
  check_dataset(data, model);
  if (!theta.converged) throw InputError("estimate_mu needs a converged fit");
  const Eigen::Index n = data.size();
  const int k1 = model.num_arms;
  const Eigen::MatrixXd x = model_covariates(data, model);
  const Eigen::VectorXd shared = x * theta.beta_x;

  MuEstimate est;
  est.h_matrix.resize(n, k1);
  for (int a = 0; a < k1; ++a) {
    est.h_matrix.col(a) = (shared.array() + theta.iota[a]).unaryExpr([&](double e) {
      return inverse_link(model.link, e);
    });
  }
  est.mu = est.h_matrix.colwise().mean().transpose();
  est.residuals.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) est.residuals[i] = data.outcome[i] - est.h_matrix(i, data.arm[i]);
  return est;
}

}  // namespace seamless
