#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stockrank {

enum class ErrorKind {
  // panel_store
  MissingColumn,
  MalformedRow,
  DuplicatePeriodLabelOrder,
  EmptyFile,
  InvalidPanel,
  AlreadyImputed,
  OrdinalOutOfRange,
  // feature_forge
  MalformedLabel,
  EmptySeries,
  DegenerateInput,
  ColumnMismatch,
  InvalidRecipe,
  // target_transform
  TooFewTargets,
  TooFewValues,
  // linear_models
  SingularSystem,
  NonFinite,
  ShapeMismatch,
  InvalidModelSpec,
  // selection
  DegenerateValidation,
  NoUsableWindow,
  AllCandidatesFailed,
  // metrics
  ConstantInput,
  LengthMismatch,
  // backtest / cli
  InsufficientHistory,
  InvalidConfig,
  IoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::DuplicatePeriodLabelOrder: return "DuplicatePeriodLabelOrder";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::InvalidPanel: return "InvalidPanel";
    case ErrorKind::AlreadyImputed: return "AlreadyImputed";
    case ErrorKind::OrdinalOutOfRange: return "OrdinalOutOfRange";
    case ErrorKind::MalformedLabel: return "MalformedLabel";
    case ErrorKind::EmptySeries: return "EmptySeries";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::ColumnMismatch: return "ColumnMismatch";
    case ErrorKind::InvalidRecipe: return "InvalidRecipe";
    case ErrorKind::TooFewTargets: return "TooFewTargets";
    case ErrorKind::TooFewValues: return "TooFewValues";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidModelSpec: return "InvalidModelSpec";
    case ErrorKind::DegenerateValidation: return "DegenerateValidation";
    case ErrorKind::NoUsableWindow: return "NoUsableWindow";
    case ErrorKind::AllCandidatesFailed: return "AllCandidatesFailed";
    case ErrorKind::ConstantInput: return "ConstantInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stockrank
