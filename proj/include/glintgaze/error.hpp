#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace glintgaze {

enum class ErrorCode {
  NonPositiveDepth,
  NoIntersection,
  BehindCamera,
  OffSurface,
  InsufficientConstraints,
  DegenerateSystem,
  DegenerateGeometry,
  NoConvergence,
  InsufficientGlints,
  DegenerateLine,
  NoFeasibleZ,
  PupilNotFound,
  CoincidentPoints,
  RankDeficient,
  NonFinite,
  InvalidArgument,
  Config,
  Io,
  Parse,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveDepth: return "NonPositiveDepth";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::OffSurface: return "OffSurface";
    case ErrorCode::InsufficientConstraints: return "InsufficientConstraints";
    case ErrorCode::DegenerateSystem: return "DegenerateSystem";
    case ErrorCode::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::InsufficientGlints: return "InsufficientGlints";
    case ErrorCode::DegenerateLine: return "DegenerateLine";
    case ErrorCode::NoFeasibleZ: return "NoFeasibleZ";
    case ErrorCode::PupilNotFound: return "PupilNotFound";
    case ErrorCode::CoincidentPoints: return "CoincidentPoints";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "Config";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of these codes so callers
/// (the evaluation harness in particular) can count rejections by kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace glintgaze
