#include "seamless/randomization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace seamless {

StratumSchema::StratumSchema(std::vector<CovariateRule> rules) : rules_(std::move(rules)) {
  num_levels_.reserve(rules_.size());
  stratum_count_ = 1;
  for (const auto& rule : rules_) {
    const int levels = rule.kind == CovariateRule::Kind::Threshold ? 2 : rule.levels;
    if (levels < 1) throw SchemaError("covariate rule needs at least one level");
    num_levels_.push_back(levels);
    stratum_count_ *= levels;
  }
}

StratumCell StratumSchema::discretize(std::span<const double> covariates) const {
  if (covariates.size() != rules_.size()) {
    throw SchemaError("expected " + std::to_string(rules_.size()) + " randomization covariates, got " +
                      std::to_string(covariates.size()));
  }
  StratumCell cell;
  cell.levels.resize(rules_.size());
  for (std::size_t j = 0; j < rules_.size(); ++j) {
    const auto& rule = rules_[j];
    const double v = covariates[j];
    if (rule.kind == CovariateRule::Kind::Threshold) {
      cell.levels[j] = v < rule.cutoff ? 0 : 1;
    } else {
      const double r = std::round(v);
      if (r != v || r < 0 || r >= rule.levels) {
        throw SchemaError("covariate " + std::to_string(j) + " is not a valid level: " + std::to_string(v));
      }
      cell.levels[j] = static_cast<int>(r);
    }
  }
  cell.stratum = stratum_of(cell.levels);
  return cell;
}

int StratumSchema::stratum_of(std::span<const int> levels) const {
  if (levels.size() != num_levels_.size()) throw SchemaError("level tuple has wrong length");
  int s = 0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (levels[j] < 0 || levels[j] >= num_levels_[j]) throw SchemaError("level out of range");
    s = s * num_levels_[j] + levels[j];
  }
  return s;
}

std::vector<int> StratumSchema::levels_of(int stratum) const {
  if (stratum < 0 || stratum >= stratum_count_) throw SchemaError("stratum out of range");
  std::vector<int> levels(num_levels_.size());
  for (std::size_t j = num_levels_.size(); j-- > 0;) {
    levels[j] = stratum % num_levels_[j];
    stratum /= num_levels_[j];
  }
  return levels;
}

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::CR: return "cr";
    case Scheme::STRPB: return "strpb";
    case Scheme::PS: return "ps";
    case Scheme::HH: return "hh";
  }
  return "?";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "cr") return Scheme::CR;
  if (name == "strpb") return Scheme::STRPB;
  if (name == "ps") return Scheme::PS;
  if (name == "hh") return Scheme::HH;
  throw std::invalid_argument("unknown randomization scheme: " + std::string(name));
}

Randomizer::Randomizer(Scheme scheme, SchemeParams params, int num_arms, StratumSchema schema)
    : scheme_(scheme), params_(std::move(params)), num_arms_(num_arms), schema_(std::move(schema)) {
  if (num_arms_ < 2) throw std::invalid_argument("randomizer needs at least two arms");
  block_size_ = params_.block_size > 0 ? params_.block_size : 2 * num_arms_;
  if (scheme_ == Scheme::STRPB && block_size_ % num_arms_ != 0) {
    throw std::invalid_argument("block size must be a multiple of the number of arms");
  }
  if (params_.biased_coin < 0.0 || params_.biased_coin > 1.0) {
    throw std::invalid_argument("biased-coin probability must lie in [0, 1]");
  }
  if (params_.w_margin.empty()) params_.w_margin.assign(schema_.num_covariates(), 0.1);
  if (static_cast<int>(params_.w_margin.size()) != schema_.num_covariates()) {
    throw std::invalid_argument("one marginal weight per randomization covariate is required");
  }
  margin_offset_.resize(schema_.num_covariates());
  int offset = 0;
  for (int j = 0; j < schema_.num_covariates(); ++j) {
    margin_offset_[j] = offset;
    offset += schema_.num_levels()[j] * num_arms_;
  }
  margin_.assign(offset, 0);
  scratch_.resize(num_arms_);
  prob_.resize(num_arms_);
  reset();
}

void Randomizer::reset() {
  assigned_ = 0;
  overall_.assign(num_arms_, 0);
  std::fill(margin_.begin(), margin_.end(), 0);
  stratum_.assign(static_cast<std::size_t>(schema_.stratum_count()) * num_arms_, 0);
  block_remaining_.assign(stratum_.size(), 0);
}

int Randomizer::margin_count(int covariate, int level, int arm) const {
  return margin_[margin_offset_[covariate] + level * num_arms_ + arm];
}

int Randomizer::stratum_count(int stratum, int arm) const { return stratum_[stratum * num_arms_ + arm]; }

namespace {

// Adds to score[a] the range of `counts` after one more patient joins arm a.
void add_ranges(const int* counts, int num_arms, double* score) {
  int lo = counts[0], hi = counts[0], lo_ties = 0, second_lo = std::numeric_limits<int>::max();
  for (int a = 0; a < num_arms; ++a) {
    hi = std::max(hi, counts[a]);
    if (counts[a] < lo) {
      second_lo = lo;
      lo = counts[a];
      lo_ties = 1;
    } else if (counts[a] == lo) {
      ++lo_ties;
    } else {
      second_lo = std::min(second_lo, counts[a]);
    }
  }
  for (int a = 0; a < num_arms; ++a) {
    const int c = counts[a] + 1;
    const int new_hi = std::max(hi, c);
    const int new_lo = (counts[a] == lo && lo_ties == 1) ? std::min(second_lo, c) : lo;
    score[a] += new_hi - new_lo;
  }
}

}  // namespace

void Randomizer::candidate_scores(int stratum, std::span<const int> margin_levels, double* score) const {
  std::fill(score, score + num_arms_, 0.0);
  if (scheme_ == Scheme::PS) {
    for (int j = 0; j < schema_.num_covariates(); ++j) {
      add_ranges(&margin_[margin_offset_[j] + margin_levels[j] * num_arms_], num_arms_, score);
    }
    return;
  }
  // Adding the patient to arm a turns a sum of squared deviations from the arm
  // average into SS + 2 c_a + 1 - ((N + 1)^2 - N^2) / A, so twice the weighted
  // counts rank the candidates exactly as the full weighted imbalance does.
  for (int a = 0; a < num_arms_; ++a) {
    double v = params_.w_overall * overall_[a] + params_.w_stratum * stratum_[stratum * num_arms_ + a];
    for (int j = 0; j < schema_.num_covariates(); ++j) {
      v += params_.w_margin[j] * margin_[margin_offset_[j] + margin_levels[j] * num_arms_ + a];
    }
    score[a] = 2.0 * v;
  }
}

void Randomizer::fill_probabilities(int stratum, std::span<const int> margin_levels, double* prob) const {
  std::fill(prob, prob + num_arms_, 1.0 / num_arms_);
  switch (scheme_) {
    case Scheme::CR:
      return;
    case Scheme::STRPB: {
      const int* rem = &block_remaining_[stratum * num_arms_];
      int total = 0;
      for (int a = 0; a < num_arms_; ++a) total += rem[a];
      if (total == 0) return;
      for (int a = 0; a < num_arms_; ++a) prob[a] = static_cast<double>(rem[a]) / total;
      return;
    }
    case Scheme::PS:
    case Scheme::HH: {
      double* score = scratch_.data();
      candidate_scores(stratum, margin_levels, score);
      const double best = *std::min_element(score, score + num_arms_);
      const double eps = 1e-12 * (1.0 + std::abs(best));
      int tied = 0;
      for (int a = 0; a < num_arms_; ++a) tied += score[a] <= best + eps;
      if (tied == num_arms_) return;
      const double p = params_.biased_coin;
      for (int a = 0; a < num_arms_; ++a) {
        prob[a] = score[a] <= best + eps ? p / tied : (1.0 - p) / (num_arms_ - tied);
      }
      return;
    }
  }
}

Eigen::VectorXd Randomizer::assignment_probabilities(int stratum, std::span<const int> margin_levels) const {
  if (stratum < 0 || stratum >= schema_.stratum_count()) throw SchemaError("stratum out of range");
  if (static_cast<int>(margin_levels.size()) != schema_.num_covariates()) {
    throw SchemaError("margin level tuple has wrong length");
  }
  Eigen::VectorXd prob(num_arms_);
  fill_probabilities(stratum, margin_levels, prob.data());
  return prob;
}

int Randomizer::draw_strpb(int stratum, Engine& rng) {
  int* rem = &block_remaining_[stratum * num_arms_];
  int total = 0;
  for (int a = 0; a < num_arms_; ++a) total += rem[a];
  if (total == 0) {
    for (int a = 0; a < num_arms_; ++a) rem[a] = block_size_ / num_arms_;
    total = block_size_;
  }
  int u = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(total)));
  int arm = 0;
  while (u >= rem[arm]) u -= rem[arm++];
  --rem[arm];
  return arm;
}

int Randomizer::assign(int stratum, std::span<const int> margin_levels, Engine& rng) {
  if (stratum < 0 || stratum >= schema_.stratum_count()) throw SchemaError("stratum out of range");
  if (static_cast<int>(margin_levels.size()) != schema_.num_covariates()) {
    throw SchemaError("margin level tuple has wrong length");
  }
  int arm = 0;
  switch (scheme_) {
    case Scheme::CR:
      arm = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(num_arms_)));
      break;
    case Scheme::STRPB:
      arm = draw_strpb(stratum, rng);
      break;
    case Scheme::PS:
    case Scheme::HH: {
      double* prob = prob_.data();
      fill_probabilities(stratum, margin_levels, prob);
      const double u = uniform01(rng);
      double cum = 0.0;
      arm = num_arms_ - 1;
      for (int a = 0; a < num_arms_; ++a) {
        cum += prob[a];
        if (u < cum) {
          arm = a;
          break;
        }
      }
      break;
    }
  }
  record(arm, stratum, margin_levels);
  return arm;
}

void Randomizer::record_assignment(int arm, int stratum, std::span<const int> margin_levels) {
  if (arm < 0 || arm >= num_arms_) throw SchemaError("arm out of range");
  if (stratum < 0 || stratum >= schema_.stratum_count()) throw SchemaError("stratum out of range");
  if (static_cast<int>(margin_levels.size()) != schema_.num_covariates()) {
    throw SchemaError("margin level tuple has wrong length");
  }
  for (int j = 0; j < schema_.num_covariates(); ++j) {
    if (margin_levels[j] < 0 || margin_levels[j] >= schema_.num_levels()[j]) throw SchemaError("level out of range");
  }
  record(arm, stratum, margin_levels);
}

void Randomizer::record(int arm, int stratum, std::span<const int> margin_levels) {
  ++assigned_;
  ++overall_[arm];
  ++stratum_[stratum * num_arms_ + arm];
  for (int j = 0; j < schema_.num_covariates(); ++j) {
    ++margin_[margin_offset_[j] + margin_levels[j] * num_arms_ + arm];
  }
}

Eigen::MatrixXd Randomizer::imbalance() const {
  const int s_max = schema_.stratum_count();
  Eigen::MatrixXd d(num_arms_, s_max);
  for (int s = 0; s < s_max; ++s) {
    int n_s = 0;
    for (int a = 0; a < num_arms_; ++a) n_s += stratum_count(s, a);
    for (int a = 0; a < num_arms_; ++a) d(a, s) = stratum_count(s, a) - static_cast<double>(n_s) / num_arms_;
  }
  return d;
}

Eigen::MatrixXd imbalance_matrix(std::span<const int> arms, std::span<const int> strata, int num_arms,
                                 int stratum_count) {
  if (arms.size() != strata.size()) throw std::invalid_argument("arms and strata differ in length");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(num_arms, stratum_count);
  for (std::size_t i = 0; i < arms.size(); ++i) {
    const int k = arms[i], s = strata[i];
    if (k < 0 || k >= num_arms || s < 0 || s >= stratum_count) {
      throw std::out_of_range("assignment index out of range at patient " + std::to_string(i));
    }
    counts(k, s) += 1.0;
  }
  const Eigen::RowVectorXd per_arm_share = counts.colwise().sum() / num_arms;
  return counts.rowwise() - per_arm_share;
}

}  // namespace seamless
