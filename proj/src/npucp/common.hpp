// Copyright 2026 The npucp Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace npucp {

enum class ErrorCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kParse = 3,
  kStructural = 4,
  kUnsupportedOp = 5,
  kInfeasibleLayer = 6,
  kSolver = 7,
  kContract = 8,
  kValidationDependency = 10,
  kValidationBankConflict = 11,
  kValidationCapacity = 12,
  kValidationLockstep = 13,
  kValidationOutput = 14,
  kValidationPersistency = 15,
  kValidationAllocation = 16,
  kIo = 20,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

inline int64_t round_up(int64_t a, int64_t multiple) {
  return ceil_div(a, multiple) * multiple;
}

// Half-open [begin, end).
struct Range {
  int64_t begin = 0;
  int64_t end = 0;

  int64_t size() const { return end > begin ? end - begin : 0; }
  bool empty() const { return end <= begin; }
  bool contains(int64_t v) const { return v >= begin && v < end; }
  bool operator==(const Range&) const = default;
};

inline Range intersect(Range a, Range b) {
  Range r{a.begin > b.begin ? a.begin : b.begin, a.end < b.end ? a.end : b.end};
  if (r.end < r.begin) r.end = r.begin;
  return r;
}

// 64-bit FNV-1a.
uint64_t fnv1a64(const std::string& bytes);

std::string hex64(uint64_t value);

}  // namespace npucp
