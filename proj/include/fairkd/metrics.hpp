#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairkd/common.hpp"

namespace fairkd {

/// Mann-Whitney form of ROC AUC: P(score+ > score-) + 0.5 P(score+ == score-).
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// 1 where score >= threshold.
std::vector<int> binarize(std::span<const double> scores, double threshold);

/// Per-group positive prediction rates, indexed by group id.
std::vector<double> positive_rates(std::span<const int> predictions, std::span<const int> groups);

/// Demographic parity difference: max - min over groups of P(yhat = 1 | group).
/// Group ids are arbitrary non-negative integers; every id in [0, max id]
/// must occur.
double dpd(std::span<const int> predictions, std::span<const int> groups);

struct EodResult {
  double value = 0.0;
  double tpr_spread = 0.0;
  double fpr_spread = 0.0;
  std::vector<std::string> warnings;
};

/// Equalized odds difference: max of the across-group spreads of TPR and FPR.
/// Groups without positives (negatives) drop out of the TPR (FPR) spread with
/// a warning.
EodResult eod_detail(std::span<const int> predictions, std::span<const int> labels, std::span<const int> groups);
double eod(std::span<const int> predictions, std::span<const int> labels, std::span<const int> groups);

/// (mean(scores) - mean(scores[majority]))^2. Returns nullopt when the
/// majority mask selects nothing, signalling the caller to skip the term.
std::optional<double> fairness_loss(std::span<const double> scores, std::span<const std::uint8_t> majority);

/// d fairness_loss / d scores.
std::vector<double> fairness_loss_gradient(std::span<const double> scores, std::span<const std::uint8_t> majority);

struct SubgroupCounts {
  std::string name;
  long long waiting = 0;   // n_w
  long long received = 0;  // n_r
  long long failed = 0;    // n_f
};

struct CohortRates {
  std::string name;
  long long waiting = 0;
  long long received = 0;
  long long failed = 0;
  double orr = 0.0;
  std::optional<double> gfr;  // undefined when nobody received an organ
};

/// ORR = n_r / n_w and GFR = n_f / n_r.
CohortRates cohort_rates(const SubgroupCounts& counts);

double pearson(std::span<const double> x, std::span<const double> y);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

MeanStd mean_std(std::span<const double> values);

}  // namespace fairkd
