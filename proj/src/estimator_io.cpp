#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "trnav/io.hpp"

namespace trnav {

using detail::Json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Load, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Load, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorKind::Load, "write failed for '" + path.string() + "'");
}

ProblemSidecar parse_problem_json(const std::string& json_text) {
  const Json j = detail::parse_json(json_text, "problem JSON");
  detail::require_keys(j, {"intrinsics", "initial_guess", "solver", "truth"}, "problem");
  if (!j.contains("intrinsics") || !j.contains("initial_guess")) {
    throw Error(ErrorKind::Config, "problem JSON needs 'intrinsics' and 'initial_guess'");
  }
  ProblemSidecar s;
  s.intrinsics = detail::intrinsics_from_json(j.at("intrinsics"), "problem.intrinsics");
  s.initial_guess = detail::theta_from_json(j.at("initial_guess"), "problem.initial_guess");
  if (j.contains("solver")) s.solver = detail::solver_from_json(j.at("solver"), "problem.solver");
  if (j.contains("truth")) s.truth = detail::theta_from_json(j.at("truth"), "problem.truth");
  return s;
}

ProblemSidecar load_problem_json(const std::filesystem::path& path) {
  return parse_problem_json(read_text_file(path));
}

std::string problem_to_json(const ProblemSidecar& s) {
  Json j = {{"intrinsics", detail::intrinsics_json(s.intrinsics)},
            {"initial_guess", detail::theta_json(s.initial_guess)},
            {"solver", detail::solver_json(s.solver)}};
  if (s.truth) j["truth"] = detail::theta_json(*s.truth);
  return j.dump(2) + "\n";
}

std::string estimate_result_json(const EstimateResult& r) {
  Json features = Json::array();
  for (std::size_t i = 0; i < r.feature_ids.size(); ++i) {
    features.push_back({{"id", r.feature_ids[i]},
                        {"weight", r.per_feature_weights[i]},
                        {"residual_norm", r.per_feature_residuals[i].norm()}});
  }
  const Json j = {{"theta", detail::theta_json(r.theta)},
                  {"objective", r.objective},
                  {"iterations", r.iterations},
                  {"converged", r.converged},
                  {"method_used", to_string(r.method_used)},
                  {"message", r.message},
                  {"features", features}};
  return j.dump(2) + "\n";
}

}  // namespace trnav
