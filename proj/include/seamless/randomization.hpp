#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "seamless/rng.hpp"

namespace seamless {

class SchemaError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// How one randomization covariate is reduced to a level.
struct CovariateRule {
  enum class Kind { Threshold, Levels };
  Kind kind = Kind::Threshold;
  double cutoff = 0.0;  // Threshold: value < cutoff -> 0, otherwise 1
  int levels = 2;       // Levels: value must already be an integer in [0, levels)

  static CovariateRule threshold(double cutoff) { return {Kind::Threshold, cutoff, 2}; }
  static CovariateRule discrete(int levels) { return {Kind::Levels, 0.0, levels}; }
};

struct StratumCell {
  int stratum = 0;
  std::vector<int> levels;
};

/// Cross-classification of discretized covariates. Strata are indexed row-major
/// over the level tuple, the last covariate varying fastest.
class StratumSchema {
 public:
  StratumSchema() = default;
  explicit StratumSchema(std::vector<CovariateRule> rules);

  int num_covariates() const { return static_cast<int>(rules_.size()); }
  int stratum_count() const { return stratum_count_; }
  const std::vector<int>& num_levels() const { return num_levels_; }
  const std::vector<CovariateRule>& rules() const { return rules_; }

  StratumCell discretize(std::span<const double> covariates) const;
  int stratum_of(std::span<const int> levels) const;
  std::vector<int> levels_of(int stratum) const;

 private:
  std::vector<CovariateRule> rules_;
  std::vector<int> num_levels_;
  int stratum_count_ = 1;
};

enum class Scheme { CR, STRPB, PS, HH };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

struct SchemeParams {
  int block_size = 0;          // STRPB; 0 selects 2 * num_arms
  double biased_coin = 0.8;    // PS / HH probability for the minimizing arm(s)
  double w_overall = 0.3;      // HH
  std::vector<double> w_margin;  // HH, one per covariate; empty selects 0.1 each
  double w_stratum = 0.5;      // HH
};

/// Sequential assignment engine. Owns all running counts; a value type that can
/// be moved between threads.
class Randomizer {
 public:
  Randomizer(Scheme scheme, SchemeParams params, int num_arms, StratumSchema schema);

  int assign(int stratum, std::span<const int> margin_levels, Engine& rng);
  int assign(const StratumCell& cell, Engine& rng) { return assign(cell.stratum, cell.levels, rng); }

  /// Assignment probabilities the scheme would use for the next patient.
  Eigen::VectorXd assignment_probabilities(int stratum, std::span<const int> margin_levels) const;

  /// Replays a known allocation into the running counts without drawing.
  /// STRPB block slots are not consumed.
  void record_assignment(int arm, int stratum, std::span<const int> margin_levels);

  void reset();

  Scheme scheme() const { return scheme_; }
  int num_arms() const { return num_arms_; }
  int block_size() const { return block_size_; }
  int assigned() const { return assigned_; }
  const StratumSchema& schema() const { return schema_; }
  const std::vector<int>& overall_counts() const { return overall_; }
  int margin_count(int covariate, int level, int arm) const;
  int stratum_count(int stratum, int arm) const;

  /// D_n^k(s) for everything assigned so far, (num_arms x s_max).
  Eigen::MatrixXd imbalance() const;

 private:
  void candidate_scores(int stratum, std::span<const int> margin_levels, double* score) const;
  void fill_probabilities(int stratum, std::span<const int> margin_levels, double* prob) const;
  int draw_strpb(int stratum, Engine& rng);
  void record(int arm, int stratum, std::span<const int> margin_levels);

  Scheme scheme_;
  SchemeParams params_;
  int num_arms_;
  StratumSchema schema_;
  int block_size_ = 0;
  int assigned_ = 0;
  std::vector<int> overall_;
  std::vector<int> margin_offset_;
  std::vector<int> margin_;   // (covariate, level, arm)
  std::vector<int> stratum_;  // (stratum, arm)
  std::vector<int> block_remaining_;  // (stratum, arm)
  mutable std::vector<double> scratch_;  // per-arm scores, reused across calls
  std::vector<double> prob_;
};

/// D_n^k(s) = sum_i (1{arm_i = k} - 1/(K+1)) 1{stratum_i = s}.
Eigen::MatrixXd imbalance_matrix(std::span<const int> arms, std::span<const int> strata,
                                 int num_arms, int stratum_count);

}  // namespace seamless
