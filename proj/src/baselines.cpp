#include "fairkd/baselines.hpp"

#include <cmath>

#include "fairkd/nn.hpp"

namespace fairkd {

namespace {

void check_inputs(const Matrix& x, std::span<const int> labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) fail(ErrorCode::kShape, "design rows and labels differ");
  if (labels.empty()) fail(ErrorCode::kData, "empty training set");
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

void LogisticParams::validate() const {
  if (epochs < 0) fail(ErrorCode::kConfiguration, "epochs must be non-negative");
  if (!(lr > 0.0)) fail(ErrorCode::kConfiguration, "learning rate must be positive");
  if (l2 < 0.0) fail(ErrorCode::kConfiguration, "l2 must be non-negative");
}

Vector LogisticModel::predict_margin(const Matrix& x) const {
  if (x.cols() != weights.size()) fail(ErrorCode::kShape, "logistic input width mismatch");
  return (x * weights).array() + bias;
}

Vector LogisticModel::predict_proba(const Matrix& x) const {
  return predict_margin(x).unaryExpr([](double z) { return sigmoid(z); });
}

double logistic_loss(const LogisticModel& model, const Matrix& x, std::span<const int> labels, double l2) {
  check_inputs(x, labels);
  const Vector z = model.predict_margin(x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    // -[y log p + (1-y) log(1-p)] = softplus(z) - y z
    total += softplus(z(i)) - labels[static_cast<std::size_t>(i)] * z(i);
  }
  return total / static_cast<double>(z.size()) + 0.5 * l2 * model.weights.squaredNorm();
}

Vector logistic_gradient(const LogisticModel& model, const Matrix& x, std::span<const int> labels, double l2) {
  check_inputs(x, labels);
  const Vector z = model.predict_margin(x);
  Vector r(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) r(i) = sigmoid(z(i)) - labels[static_cast<std::size_t>(i)];
  const double n = static_cast<double>(z.size());
  Vector g(model.weights.size() + 1);
  g.head(model.weights.size()) = x.transpose() * r / n + l2 * model.weights;
  g(model.weights.size()) = r.sum() / n;
  return g;
}

LogisticModel fit_logistic(const Matrix& x, std::span<const int> labels, const LogisticParams& params,
                           LogisticTrace* trace) {
  params.validate();
  check_inputs(x, labels);
  bool pos = false, neg = false;
  for (int y : labels) {
    if (y != 0 && y != 1) fail(ErrorCode::kData, "labels must be 0 or 1");
    (y == 1 ? pos : neg) = true;
  }
  if (!pos || !neg) fail(ErrorCode::kConfiguration, "logistic regression needs both classes");

  LogisticModel model;
  model.weights = Vector::Zero(x.cols());
  nn::Parameter<double> w("logistic.w", Matrix::Zero(x.cols(), 1));
  nn::Parameter<double> b("logistic.b", Matrix::Zero(1, 1));
  nn::Adam<double> opt({&w, &b}, nn::AdamConfig{.lr = params.lr});
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    model.weights = w.value.col(0);
    model.bias = b.value(0, 0);
    if (trace != nullptr) trace->loss.push_back(logistic_loss(model, x, labels, params.l2));
    const Vector g = logistic_gradient(model, x, labels, params.l2);
    w.grad.col(0) = g.head(x.cols());
    b.grad(0, 0) = g(x.cols());
    opt.step();
  }
  model.weights = w.value.col(0);
  model.bias = b.value(0, 0);
  if (trace != nullptr) trace->loss.push_back(logistic_loss(model, x, labels, params.l2));
  return model;
}

LogisticModel fit_meld_classifier(std::span<const double> scores, std::span<const int> labels,
                                  const LogisticParams& params) {
  if (scores.size() != labels.size()) fail(ErrorCode::kShape, "scores and labels differ in length");
  if (scores.empty()) fail(ErrorCode::kData, "empty training set");
  const double n = static_cast<double>(scores.size());
  double mean = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s)) fail(ErrorCode::kData, "score column holds non-finite values; impute first");
    mean += s;
  }
  mean /= n;
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const double sd = std::sqrt(var / n);
  const bool constant = sd == 0.0;
  Matrix x(static_cast<Eigen::Index>(scores.size()), 1);
  for (std::size_t i = 0; i < scores.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = constant ? 0.0 : (scores[i] - mean) / sd;
  LogisticModel fitted = fit_logistic(x, labels, params);
  LogisticModel out;
  out.weights = Vector::Zero(1);
  if (constant) {
    out.bias = fitted.bias;
    out.warnings.push_back("score column is constant; fitted an intercept-only model");
  } else {
    out.weights(0) = fitted.weights(0) / sd;
    out.bias = fitted.bias - fitted.weights(0) * mean / sd;
  }
  return out;
}

}  // namespace fairkd
