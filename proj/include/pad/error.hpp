#pragma once

#include <stdexcept>
#include <string>

namespace pad {

enum class Err {
  ZeroNorm,
  DimensionMismatch,
  ShapeMismatch,
  KindMismatch,
  NonFinite,
  IndexOutOfRange,
  SequenceTooLong,
  TokenOutOfVocab,
  NotLearnable,
  ShotCountMismatch,
  UnnormalizedFeature,
  FormatError,
  ChecksumMismatch,
  ManifestMismatch,
  InsufficientShots,
  EmptySplit,
  EmptyTaskList,
  IncompatibleEncoder,
  RejectionBudgetExceeded,
  EmptyGrid,
  LengthMismatch,
  Empty,
  InvalidConfig,
  IoError,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& message)
      : std::runtime_error(std::string(err_name(code)) + ": " + message), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void raise(Err code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pad
