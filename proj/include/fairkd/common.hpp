#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace fairkd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

enum class ErrorCode {
  kSchema,
  kData,
  kConfiguration,
  kShape,
  kNumeric,
  kState,
  kIndex,
  kUndefinedMetric,
  kIo,
  kUsage,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above so the
// CLI can print a single machine-parsable line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace fairkd
