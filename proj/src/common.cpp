#include "fairkd/common.hpp"

namespace fairkd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSchema: return "schema_error";
    case ErrorCode::kData: return "data_error";
    case ErrorCode::kConfiguration: return "configuration_error";
    case ErrorCode::kShape: return "shape_error";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kState: return "state_error";
    case ErrorCode::kIndex: return "index_error";
    case ErrorCode::kUndefinedMetric: return "undefined_metric";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kUsage: return "usage_error";
  }
  return "error";
}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace fairkd
