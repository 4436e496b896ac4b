#pragma once

#include <functional>
#include <optional>

#include "doctest.h"
#include "fairkd/common.hpp"

// Runs `fn` and reports the ErrorCode it threw, or nullopt when it returned.
inline std::optional<fairkd::ErrorCode> thrown_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const fairkd::Error& e) {
    return e.code();
  }
  return std::nullopt;
}

#define CHECK_ERROR_CODE(expr, expected) CHECK(thrown_code([&] { (void)(expr); }) == (expected))
