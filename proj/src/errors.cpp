#include "dcpl/errors.hpp"

namespace dcpl {

const char* error_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedContainer: return "MalformedContainer";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteTensor: return "NonFiniteTensor";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::ConfigMismatch: return "ConfigMismatch";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::SequenceTooLong: return "SequenceTooLong";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DegenerateStd: return "DegenerateStd";
    case ErrorKind::IncompleteTrace: return "IncompleteTrace";
    case ErrorKind::WrongSublayerKind: return "WrongSublayerKind";
    case ErrorKind::UndefinedDerivative: return "UndefinedDerivative";
    case ErrorKind::WidthMismatch: return "WidthMismatch";
    case ErrorKind::ZeroNorm: return "ZeroNorm";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::DegenerateSeries: return "DegenerateSeries";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::TooManyAssignments: return "TooManyAssignments";
    case ErrorKind::MisalignedCheckpoints: return "MisalignedCheckpoints";
    case ErrorKind::InsufficientSentences: return "InsufficientSentences";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicateKey: return "DuplicateKey";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
  }
  return "UnknownError";
}

bool is_numerical(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DegenerateStd:
    case ErrorKind::UndefinedDerivative:
    case ErrorKind::ZeroNorm:
      return true;
    default:
      return false;
  }
}

}  // namespace dcpl
