//
// Project hiergen - Copyright 2026 hiergen authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef HIERGEN_ERROR_H_
#define HIERGEN_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace hiergen {

enum class ErrorKind {
  kEmptyInput,
  kUnsupportedToken,
  kUnclosedRing,
  kUnclosedBranch,
  kValenceViolation,
  kWidthMismatch,
  kKekulizeFailed,
  kUnknownMotif,
  kCandidateNotFound,
  kNoValidCandidate,
  kEmptyAttachmentVocab,
  kShapeMismatch,
  kNotScalar,
  kEmptyMemory,
  kTooFewSamples,
  kEmptyReference,
  kConfig,
  kIo,
  kFormat,
  kVersionMismatch,
  kOracleFailure,
  kNumeric,
};

std::string_view error_kind_name(ErrorKind kind);

// Error carrying a machine-readable kind. `position` is a character offset
// for parse errors and -1 otherwise.
class Error: public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &what, int position = -1)
      : std::runtime_error(what), kind_(kind), position_(position) { }

  ErrorKind kind() const noexcept { return kind_; }
  int position() const noexcept { return position_; }

private:
  ErrorKind kind_;
  int position_;
};

}  // namespace hiergen

#endif  // HIERGEN_ERROR_H_
