#pragma once

#include <stdexcept>
#include <string>

namespace trnav {

/// Failure categories raised by the library. The CLI maps every one of these
/// to exit code 1; usage errors never reach this type.
enum class ErrorKind {
  Domain,                  // query or argument outside its valid domain
  Config,                  // invalid configuration / terrain spec / scenario
  Load,                    // unreadable or malformed input file
  NoIntersection,          // ray left the DTM hull without hitting terrain
  InvalidOrigin,           // ray origin at or below the terrain surface
  Untrackable,             // singular structure tensor
  LostFeature,             // tracking window left the image
  DegenerateFeature,       // grazing ray against the tangent plane
  DegenerateGeometry,      // predicted direction has zero length
  InsufficientConstraints, // fewer than six usable features
  JacobianEvaluation,      // non-finite residual at a probe point
  NumericalFailure,        // non-finite objective
  RobustCollapse,          // every M-estimator weight is zero
  DegenerateScenario,      // simulator produced too few features
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Config: return "configuration error";
    case ErrorKind::Load: return "load error";
    case ErrorKind::NoIntersection: return "no intersection";
    case ErrorKind::InvalidOrigin: return "invalid origin";
    case ErrorKind::Untrackable: return "untrackable feature";
    case ErrorKind::LostFeature: return "lost feature";
    case ErrorKind::DegenerateFeature: return "degenerate feature";
    case ErrorKind::DegenerateGeometry: return "degenerate geometry";
    case ErrorKind::InsufficientConstraints: return "insufficient constraints";
    case ErrorKind::JacobianEvaluation: return "jacobian evaluation error";
    case ErrorKind::NumericalFailure: return "numerical failure";
    case ErrorKind::RobustCollapse: return "robust collapse";
    case ErrorKind::DegenerateScenario: return "degenerate scenario";
  }
  return "error";
}

}  // namespace trnav
