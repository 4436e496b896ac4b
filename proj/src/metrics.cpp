#include "fairkd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fairkd {

namespace {

int group_count(std::span<const int> groups) {
  int max_id = -1;
  for (int g : groups) {
    if (g < 0) fail(ErrorCode::kData, "group ids must be non-negative");
    max_id = std::max(max_id, g);
  }
  return max_id + 1;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kShape, "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of midranks of the positives (ranks are 1-based, ties share the mean).
  double rank_sum = 0.0;
  long long positives = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const long long negatives = static_cast<long long>(n) - positives;
  if (positives == 0 || negatives == 0) fail(ErrorCode::kUndefinedMetric, "ROC AUC needs both classes");
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

std::vector<int> binarize(std::span<const double> scores, double threshold) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(s >= threshold ? 1 : 0);
  return out;
}

std::vector<double> positive_rates(std::span<const int> predictions, std::span<const int> groups) {
  if (predictions.size() != groups.size()) fail(ErrorCode::kShape, "predictions and groups differ in length");
  const int g = group_count(groups);
  std::vector<double> positives(static_cast<std::size_t>(g), 0.0), totals(static_cast<std::size_t>(g), 0.0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    totals[groups[i]] += 1.0;
    positives[groups[i]] += predictions[i] == 1 ? 1.0 : 0.0;
  }
  std::vector<double> rates(static_cast<std::size_t>(g));
  for (int k = 0; k < g; ++k) {
    if (totals[k] == 0.0) fail(ErrorCode::kUndefinedMetric, "group " + std::to_string(k) + " is empty");
    rates[k] = positives[k] / totals[k];
  }
  return rates;
}

double dpd(std::span<const int> predictions, std::span<const int> groups) {
  const auto rates = positive_rates(predictions, groups);
  if (rates.size() < 2) fail(ErrorCode::kUndefinedMetric, "DPD needs at least two groups");
  const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
  return *hi - *lo;
}

EodResult eod_detail(std::span<const int> predictions, std::span<const int> labels, std::span<const int> groups) {
  if (predictions.size() != groups.size() || labels.size() != groups.size()) {
    fail(ErrorCode::kShape, "predictions, labels and groups differ in length");
  }
  const int g = group_count(groups);
  std::vector<double> tp(g, 0.0), pos(g, 0.0), fp(g, 0.0), neg(g, 0.0);
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const int k = groups[i];
    if (labels[i] == 1) {
      pos[k] += 1.0;
      tp[k] += predictions[i] == 1 ? 1.0 : 0.0;
    } else {
      neg[k] += 1.0;
      fp[k] += predictions[i] == 1 ? 1.0 : 0.0;
    }
  }
  EodResult result;
  std::vector<double> tprs, fprs;
  for (int k = 0; k < g; ++k) {
    if (pos[k] > 0) {
      tprs.push_back(tp[k] / pos[k]);
    } else {
      result.warnings.push_back("group " + std::to_string(k) + " has no positive labels; excluded from TPR spread");
    }
    if (neg[k] > 0) {
      fprs.push_back(fp[k] / neg[k]);
    } else {
      result.warnings.push_back("group " + std::to_string(k) + " has no negative labels; excluded from FPR spread");
    }
  }
  if (tprs.size() < 2 && fprs.size() < 2) {
    fail(ErrorCode::kUndefinedMetric, "EOD needs at least two groups with both labels present");
  }
  auto spread = [](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  result.tpr_spread = spread(tprs);
  result.fpr_spread = spread(fprs);
  result.value = std::max(result.tpr_spread, result.fpr_spread);
  return result;
}

double eod(std::span<const int> predictions, std::span<const int> labels, std::span<const int> groups) {
  return eod_detail(predictions, labels, groups).value;
}

std::optional<double> fairness_loss(std::span<const double> scores, std::span<const std::uint8_t> majority) {
  if (scores.size() != majority.size()) fail(ErrorCode::kShape, "scores and majority mask differ in length");
  if (scores.empty()) return std::nullopt;
  double total = 0.0, maj_total = 0.0;
  std::size_t maj_count = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total += scores[i];
    if (majority[i]) {
      maj_total += scores[i];
      ++maj_count;
    }
  }
  if (maj_count == 0) return std::nullopt;
  const double gap = total / static_cast<double>(scores.size()) - maj_total / static_cast<double>(maj_count);
  return gap * gap;
}

std::vector<double> fairness_loss_gradient(std::span<const double> scores, std::span<const std::uint8_t> majority) {
  if (scores.size() != majority.size()) fail(ErrorCode::kShape, "scores and majority mask differ in length");
  const double n = static_cast<double>(scores.size());
  double total = 0.0, maj_total = 0.0, maj_count = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    total += scores[i];
    if (majority[i]) {
      maj_total += scores[i];
      maj_count += 1.0;
    }
  }
  if (maj_count == 0.0) fail(ErrorCode::kData, "majority mask selects no rows");
  const double gap = total / n - maj_total / maj_count;
  std::vector<double> grad(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    grad[i] = 2.0 * gap * (1.0 / n - (majority[i] ? 1.0 / maj_count : 0.0));
  }
  return grad;
}

CohortRates cohort_rates(const SubgroupCounts& c) {
  if (c.waiting < 0 || c.received < 0 || c.failed < 0) fail(ErrorCode::kData, "counts must be non-negative");
  if (c.failed > c.received) fail(ErrorCode::kData, "subgroup '" + c.name + "': n_f exceeds n_r");
  if (c.received > c.waiting) fail(ErrorCode::kData, "subgroup '" + c.name + "': n_r exceeds n_w");
  CohortRates r{c.name, c.waiting, c.received, c.failed, 0.0, std::nullopt};
  if (c.waiting > 0) r.orr = static_cast<double>(c.received) / static_cast<double>(c.waiting);
  if (c.received > 0) r.gfr = static_cast<double>(c.failed) / static_cast<double>(c.received);
  return r;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::kShape, "pearson inputs differ in length");
  if (x.size() < 2) fail(ErrorCode::kUndefinedMetric, "pearson needs at least two points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::kUndefinedMetric, "pearson undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) return {};
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) return {values[0], 0.0};
  const double n = static_cast<double>(values.size());
  const double m = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - m) * (v - m);
  return {m, std::sqrt(var / n)};
}

}  // namespace fairkd
