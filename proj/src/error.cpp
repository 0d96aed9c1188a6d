#include "pad/error.hpp"

namespace pad {

const char* err_name(Err e) {
  switch (e) {
    case Err::ZeroNorm: return "ZeroNorm";
    case Err::DimensionMismatch: return "DimensionMismatch";
    case Err::ShapeMismatch: return "ShapeMismatch";
    case Err::KindMismatch: return "KindMismatch";
    case Err::NonFinite: return "NonFinite";
    case Err::IndexOutOfRange: return "IndexOutOfRange";
    case Err::SequenceTooLong: return "SequenceTooLong";
    case Err::TokenOutOfVocab: return "TokenOutOfVocab";
    case Err::NotLearnable: return "NotLearnable";
    case Err::ShotCountMismatch: return "ShotCountMismatch";
    case Err::UnnormalizedFeature: return "UnnormalizedFeature";
    case Err::FormatError: return "FormatError";
    case Err::ChecksumMismatch: return "ChecksumMismatch";
    case Err::ManifestMismatch: return "ManifestMismatch";
    case Err::InsufficientShots: return "InsufficientShots";
    case Err::EmptySplit: return "EmptySplit";
    case Err::EmptyTaskList: return "EmptyTaskList";
    case Err::IncompatibleEncoder: return "IncompatibleEncoder";
    case Err::RejectionBudgetExceeded: return "RejectionBudgetExceeded";
    case Err::EmptyGrid: return "EmptyGrid";
    case Err::LengthMismatch: return "LengthMismatch";
    case Err::Empty: return "Empty";
    case Err::InvalidConfig: return "InvalidConfig";
    case Err::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace pad
