#pragma once

#include <span>
#include <string>
#include <vector>

#include "fairkd/common.hpp"

namespace fairkd {

struct LogisticParams {
  int epochs = 200;
  double lr = 0.1;
  double l2 = 1e-4;

  void validate() const;
};

/// p(y = 1 | x) = sigmoid(x . weights + bias).
struct LogisticModel {
  Vector weights;
  double bias = 0.0;
  std::vector<std::string> warnings;

  Vector predict_margin(const Matrix& x) const;
  Vector predict_proba(const Matrix& x) const;
};

/// Mean cross-entropy plus 0.5 * l2 * |weights|^2 (the bias is not penalized).
double logistic_loss(const LogisticModel& model, const Matrix& x, std::span<const int> labels, double l2);

/// Gradient of logistic_loss as [d/dweights..., d/dbias].
Vector logistic_gradient(const LogisticModel& model, const Matrix& x, std::span<const int> labels, double l2);

struct LogisticTrace {
  std::vector<double> loss;  // loss before each epoch and after the last
};

/// Full-batch Adam from a zero model. Throws kConfiguration on a single-class
/// label vector.
LogisticModel fit_logistic(const Matrix& x, std::span<const int> labels, const LogisticParams& params,
                           LogisticTrace* trace = nullptr);

/// One-feature logistic regression on a risk score. The score is
/// standardized for fitting and the result mapped back to raw-score units.
/// A constant score yields an intercept-only model with a warning.
LogisticModel fit_meld_classifier(std::span<const double> scores, std::span<const int> labels,
                                  const LogisticParams& params = {});

}  // namespace fairkd
