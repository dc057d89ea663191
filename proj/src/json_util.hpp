#pragma once

// Shared JSON conversions for the estimator and simulator documents.

#include <initializer_list>
#include <string>

#include <json.hpp>

#include "trnav/error.hpp"
#include "trnav/estimator.hpp"
#include "trnav/geometry.hpp"

namespace trnav::detail {

using Json = nlohmann::json;

inline Json parse_json(const std::string& text, const std::string& what) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorKind::Load, what + ": " + e.what());
  }
}

/// Rejects keys outside `allowed` so typos in configs are caught.
inline void require_keys(const Json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::Config, where + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || item.key() == k;
    if (!ok) throw Error(ErrorKind::Config, "unknown key '" + item.key() + "' in " + where);
  }
}

template <class T>
void read_opt(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw Error(ErrorKind::Config, std::string("bad value for '") + key + "' in " + where);
  }
}

inline Vec3 read_vec3(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_array() || j.at(key).size() != 3) {
    throw Error(ErrorKind::Config, std::string("'") + key + "' in " + where + " must be a 3-array");
  }
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j.at(key)[static_cast<std::size_t>(k)].is_number()) {
      throw Error(ErrorKind::Config, std::string("'") + key + "' in " + where + " must be numeric");
    }
    v[k] = j.at(key)[static_cast<std::size_t>(k)].get<double>();
  }
  return v;
}

inline Json vec3_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json intrinsics_json(const CameraIntrinsics& k) {
  return {{"width_px", k.width_px()},
          {"height_px", k.height_px()},
          {"fov_long_deg", k.fov_long_deg()},
          {"fov_short_deg", k.fov_short_deg()}};
}

inline CameraIntrinsics intrinsics_from_json(const Json& j, const std::string& where) {
  require_keys(j, {"width_px", "height_px", "fov_long_deg", "fov_short_deg"}, where);
  int w = 0, h = 0;
  double fl = 0.0, fs = 0.0;
  for (const char* k : {"width_px", "height_px", "fov_long_deg", "fov_short_deg"}) {
    if (!j.contains(k)) throw Error(ErrorKind::Config, std::string("missing '") + k + "' in " + where);
  }
  read_opt(j, "width_px", w, where);
  read_opt(j, "height_px", h, where);
  read_opt(j, "fov_long_deg", fl, where);
  read_opt(j, "fov_short_deg", fs, where);
  try {
    return CameraIntrinsics(w, h, fl, fs);
  } catch (const Error& e) {
    throw Error(ErrorKind::Config, where + ": " + e.what());
  }
}

inline Vec3 to_deg(const Vec3& v) { return v * rad2deg(1.0); }
inline Vec3 to_rad(const Vec3& v) { return v * deg2rad(1.0); }

inline Json theta_json(const ParameterVector& t) {
  return {{"p1", vec3_json(t.segment<3>(theta_index::kPosition))},
          {"attitude1_deg", vec3_json(to_deg(t.segment<3>(theta_index::kAttitude)))},
          {"p12", vec3_json(t.segment<3>(theta_index::kTranslation))},
          {"relative_attitude_deg", vec3_json(to_deg(t.segment<3>(theta_index::kRotation)))}};
}

inline ParameterVector theta_from_json(const Json& j, const std::string& where) {
  require_keys(j, {"p1", "attitude1_deg", "p12", "relative_attitude_deg"}, where);
  ParameterVector t;
  t.segment<3>(theta_index::kPosition) = read_vec3(j, "p1", where);
  t.segment<3>(theta_index::kAttitude) = to_rad(read_vec3(j, "attitude1_deg", where));
  t.segment<3>(theta_index::kTranslation) = read_vec3(j, "p12", where);
  t.segment<3>(theta_index::kRotation) = to_rad(read_vec3(j, "relative_attitude_deg", where));
  return t;
}

inline Json solver_json(const SolverConfig& c) {
  Json m = {{"kind", to_string(c.mestimator.kind)}};
  if (c.mestimator.kind != MEstimator::Kind::None) m["tuning"] = c.mestimator.tuning;
  return {{"max_gn_iters", c.max_gn_iters},     {"gn_switch_iters", c.gn_switch_iters},
          {"max_lm_iters", c.max_lm_iters},     {"lm_lambda0", c.lm_lambda0},
          {"lm_lambda_factor", c.lm_lambda_factor}, {"step_tol", c.step_tol},
          {"residual_tol", c.residual_tol},     {"mestimator", m},
          {"reanchor_every", c.reanchor_every}};
}

inline SolverConfig solver_from_json(const Json& j, const std::string& where) {
  require_keys(j,
               {"max_gn_iters", "gn_switch_iters", "max_lm_iters", "lm_lambda0", "lm_lambda_factor",
                "step_tol", "residual_tol", "mestimator", "reanchor_every"},
               where);
  SolverConfig c;
  read_opt(j, "max_gn_iters", c.max_gn_iters, where);
  read_opt(j, "gn_switch_iters", c.gn_switch_iters, where);
  read_opt(j, "max_lm_iters", c.max_lm_iters, where);
  read_opt(j, "lm_lambda0", c.lm_lambda0, where);
  read_opt(j, "lm_lambda_factor", c.lm_lambda_factor, where);
  read_opt(j, "step_tol", c.step_tol, where);
  read_opt(j, "residual_tol", c.residual_tol, where);
  read_opt(j, "reanchor_every", c.reanchor_every, where);
  if (j.contains("mestimator")) {
    const Json& m = j.at("mestimator");
    const std::string mw = where + ".mestimator";
    require_keys(m, {"kind", "tuning"}, mw);
    std::string kind = "huber";
    read_opt(m, "kind", kind, mw);
    c.mestimator.kind = mestimator_kind_from_string(kind);
    c.mestimator.tuning = c.mestimator.kind == MEstimator::Kind::Tukey ? MEstimator::tukey().tuning
                          : c.mestimator.kind == MEstimator::Kind::Huber ? MEstimator::huber().tuning
                                                                           : 0.0;
    read_opt(m, "tuning", c.mestimator.tuning, mw);
  }
  c.validate();
  return c;
}

}  // namespace trnav::detail
