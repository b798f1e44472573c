#pragma once

#include <stdexcept>
#include <string>

namespace dcpl {

enum class ErrorKind {
  // model container / configuration
  MalformedContainer,
  ShapeMismatch,
  NonFiniteTensor,
  InvalidConfig,
  ConfigMismatch,
  // forward pass
  TokenOutOfRange,
  SequenceTooLong,
  EmptyInput,
  // decompositions
  IndexOutOfRange,
  DegenerateStd,
  IncompleteTrace,
  WrongSublayerKind,
  UndefinedDerivative,
  WidthMismatch,
  // indicators
  ZeroNorm,
  EmptyCorpus,
  // statistics
  DegenerateSeries,
  EmptySeries,
  EmptyGroup,
  TooManyAssignments,
  MisalignedCheckpoints,
  InsufficientSentences,
  // scoring
  MalformedRow,
  DuplicateKey,
  LengthMismatch,
  // generic
  InvalidArgument,
  IoError,
};

const char* error_name(ErrorKind kind);

// Numerical errors map to CLI exit code 2, everything else to 1.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }
  const char* name() const { return error_name(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace dcpl
