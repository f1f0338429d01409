#ifndef FMTS_ERROR_HPP
#define FMTS_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace fmts {

enum class ErrorCode {
  InvalidArgument,
  LagTooLarge,
  SingularSigma,
  DegenerateConditional,
  DegenerateCoordinate,
  DimensionMismatch,
  InvalidPair,
  AllTrimmed,
  BadDimension,
  BlockTooLong,
  SelectionFailed,
  ExplosivePath,
  CsvParse,
  NonPositiveCount,
  NonPositiveResponse,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::LagTooLarge: return "LagTooLarge";
    case ErrorCode::SingularSigma: return "SingularSigma";
    case ErrorCode::DegenerateConditional: return "DegenerateConditional";
    case ErrorCode::DegenerateCoordinate: return "DegenerateCoordinate";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidPair: return "InvalidPair";
    case ErrorCode::AllTrimmed: return "AllTrimmed";
    case ErrorCode::BadDimension: return "BadDimension";
    case ErrorCode::BlockTooLong: return "BlockTooLong";
    case ErrorCode::SelectionFailed: return "SelectionFailed";
    case ErrorCode::ExplosivePath: return "ExplosivePath";
    case ErrorCode::CsvParse: return "CsvParse";
    case ErrorCode::NonPositiveCount: return "NonPositiveCount";
    case ErrorCode::NonPositiveResponse: return "NonPositiveResponse";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable code and, once it has passed
/// through the pipeline, the name of the stage that raised it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  Error(ErrorCode code, std::string stage, const std::string& message)
      : std::runtime_error("[" + stage + "] " + std::string(to_string(code)) +
                           ": " + message),
        code_(code),
        stage_(std::move(stage)),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }
  const std::string& detail() const noexcept { return detail_; }

  Error with_stage(std::string stage) const {
    return Error(code_, std::move(stage), detail_);
  }

 private:
  ErrorCode code_;
  std::string stage_;
  std::string detail_;
};

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace fmts

#endif  // FMTS_ERROR_HPP
