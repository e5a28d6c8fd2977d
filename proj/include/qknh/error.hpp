#ifndef QKNH_ERROR_HPP
#define QKNH_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace qknh {

enum class ErrorCode {
  InvalidArgument,
  NoBarrier,
  DegenerateEnergy,
  EmptyWindow,
  NonConvergence,
  NoRoot,
  UnknownSymbol,
  CaseViolation,
  DegenerateCase,
  AllGrowing,
  WindowOverflow,
  GridTooSmall,
  TrackingLoss,
  ConfigError,
  ExperimentError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NoBarrier: return "NoBarrier";
    case ErrorCode::DegenerateEnergy: return "DegenerateEnergy";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::CaseViolation: return "CaseViolation";
    case ErrorCode::DegenerateCase: return "DegenerateCase";
    case ErrorCode::AllGrowing: return "AllGrowing";
    case ErrorCode::WindowOverflow: return "WindowOverflow";
    case ErrorCode::GridTooSmall: return "GridTooSmall";
    case ErrorCode::TrackingLoss: return "TrackingLoss";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ExperimentError: return "ExperimentError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's machine-readable error report) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace qknh

#endif  // QKNH_ERROR_HPP
