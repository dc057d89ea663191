#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "trnav/estimator.hpp"

namespace trnav {

/// JSON sidecar that accompanies a flow CSV and a DTM file to form an
/// estimation problem. Angles are in degrees on disk.
struct ProblemSidecar {
  CameraIntrinsics intrinsics{4800, 2923, 59.97, 38.68};
  ParameterVector initial_guess = ParameterVector::Zero();
  SolverConfig solver;
  /// Optional reference parameters (simulator exports embed the truth).
  std::optional<ParameterVector> truth;
};

ProblemSidecar parse_problem_json(const std::string& json_text);
ProblemSidecar load_problem_json(const std::filesystem::path& path);
std::string problem_to_json(const ProblemSidecar& sidecar);

/// Result document: theta (m, deg), objective, iterations, converged,
/// method_used, per-feature ids/weights/residual norms.
std::string estimate_result_json(const EstimateResult& result);

/// Reads a whole text file; throws Error{Load} when unreadable.
std::string read_text_file(const std::filesystem::path& path);
/// Writes a whole text file; throws Error{Load} when unwritable.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace trnav
