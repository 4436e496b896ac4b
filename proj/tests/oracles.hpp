#pragma once

// Independent reference implementations used by the unit tests and the
// acceptance runner. Each one counts or enumerates directly instead of
// sharing code paths with the library.

#include <algorithm>
#include <optional>
#include <set>
#include <vector>

#include "fairkd/trees.hpp"

namespace oracle {

/// Pair counting: P(s+ > s-) + 0.5 P(s+ == s-).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long long pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

inline double rate(const std::vector<int>& preds, const std::vector<int>& keep) {
  long long n = 0, hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!keep[i]) continue;
    ++n;
    hits += preds[i];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

inline double dpd(const std::vector<int>& preds, const std::vector<int>& groups, int n_groups) {
  std::vector<double> rates;
  for (int g = 0; g < n_groups; ++g) {
    std::vector<int> keep(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) keep[i] = groups[i] == g;
    rates.push_back(rate(preds, keep));
  }
  return *std::max_element(rates.begin(), rates.end()) - *std::min_element(rates.begin(), rates.end());
}

/// max(TPR spread, FPR spread); a group without positives (negatives) is left
/// out of the TPR (FPR) spread. Undefined when neither spread has two groups.
inline std::optional<double> eod(const std::vector<int>& preds, const std::vector<int>& labels,
                                 const std::vector<int>& groups, int n_groups) {
  std::vector<double> tpr, fpr;
  for (int g = 0; g < n_groups; ++g) {
    for (int y : {1, 0}) {
      std::vector<int> keep(groups.size());
      bool any = false;
      for (std::size_t i = 0; i < groups.size(); ++i) {
        keep[i] = groups[i] == g && labels[i] == y;
        any = any || keep[i];
      }
      if (any) (y == 1 ? tpr : fpr).push_back(rate(preds, keep));
    }
  }
  if (tpr.size() < 2 && fpr.size() < 2) return std::nullopt;
  auto spread = [](const std::vector<double>& v) {
    return v.size() < 2 ? 0.0 : *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  };
  return std::max(spread(tpr), spread(fpr));
}

/// Tries every feature and every cut between consecutive distinct values,
/// summing each side from scratch. Ties keep the first candidate in
/// (feature, threshold) order.
inline fairkd::SplitCandidate exhaustive_split(const fairkd::Matrix& x, const std::vector<double>& g,
                                               const std::vector<double>& h, int min_leaf, double lambda) {
  fairkd::SplitCandidate best;
  const auto n = static_cast<std::size_t>(x.rows());
  for (int f = 0; f < x.cols(); ++f) {
    std::set<double> values;
    for (std::size_t i = 0; i < n; ++i) values.insert(x(static_cast<Eigen::Index>(i), f));
    for (auto it = values.begin(); std::next(it) != values.end(); ++it) {
      const double v = *it, next = *std::next(it);
      double gl = 0, hl = 0, gr = 0, hr = 0;
      int nl = 0, nr = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (x(static_cast<Eigen::Index>(i), f) <= v) {
          gl += g[i];
          hl += h[i];
          ++nl;
        } else {
          gr += g[i];
          hr += h[i];
          ++nr;
        }
      }
      if (nl < min_leaf || nr < min_leaf) continue;
      const double gain = gl * gl / (hl + lambda) + gr * gr / (hr + lambda) -
                          (gl + gr) * (gl + gr) / (hl + hr + lambda);
      if (gain > best.gain && gain > 0.0) best = {f, (v + next) / 2.0, gain};
    }
  }
  return best;
}

inline double leaf_value(const fairkd::Matrix& x, const std::vector<double>& g, const std::vector<double>& h,
                         double lambda, int feature, double threshold, int side) {
  double gs = 0, hs = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int s = feature < 0 ? 0 : (x(i, feature) <= threshold ? 0 : 1);
    if (s != side) continue;
    gs += g[static_cast<std::size_t>(i)];
    hs += h[static_cast<std::size_t>(i)];
  }
  return -gs / (hs + lambda);
}

}  // namespace oracle
