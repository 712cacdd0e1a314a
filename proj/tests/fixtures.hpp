#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "seamless/trial.hpp"

namespace fixture {

// Stage-1 style dataset from the logistic example.
inline seamless::TrialDataset m1_dataset(int n, std::uint64_t seed, seamless::Scheme scheme = seamless::Scheme::STRPB,
                                         Eigen::Vector2d iota = Eigen::Vector2d::Zero()) {
  seamless::TrialConfig config;
  config.scheme = scheme;
  const seamless::DgpSpec dgp = seamless::DgpSpec::m1(iota);
  return seamless::enroll_stage(dgp, config, {0, 1, 2}, n, seamless::derive_seed(seed, 1),
                                seamless::derive_seed(seed, 2), seamless::derive_seed(seed, 3));
}

inline seamless::WorkingModel logistic(int arms, std::vector<int> cols) {
  return seamless::WorkingModel{seamless::Link::Logit, arms, std::move(cols)};
}

// Strata drawn i.i.d. uniformly over `s_max` cells.
inline std::vector<int> uniform_strata(int n, int s_max, seamless::Engine& rng) {
  std::vector<int> s(n);
  for (int& v : s) v = static_cast<int>(seamless::uniform_index(rng, s_max));
  return s;
}

// n patients, three arms in rotation, standard normal covariates (at least one
// column); the outcome depends on the first two.
inline seamless::TrialDataset random_small(int n, int q, seamless::Engine& rng) {
  std::normal_distribution<double> normal;
  seamless::TrialDataset d;
  d.num_arms = 3;
  d.covariates.resize(n, std::max(q, 1));
  d.outcome.resize(n);
  d.arm.resize(n);
  d.stratum.assign(n, 0);
  const Eigen::Vector3d shift(0.0, 0.3, -0.2);
  for (int i = 0; i < n; ++i) {
    d.arm[i] = i % 3;
    for (Eigen::Index j = 0; j < d.covariates.cols(); ++j) d.covariates(i, j) = normal(rng);
    const double eta = -0.3 + shift[d.arm[i]] + 0.8 * d.covariates(i, 0) - 0.4 * (q > 1 ? d.covariates(i, 1) : 0.0);
    d.outcome[i] = seamless::uniform01(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1.0 : 0.0;
  }
  return d;
}

inline std::vector<int> first_columns(int q) {
  std::vector<int> cols(q);
  std::iota(cols.begin(), cols.end(), 0);
  return cols;
}

}  // namespace fixture
