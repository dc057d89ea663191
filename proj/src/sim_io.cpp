#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "json_util.hpp"
#include "trnav/io.hpp"
#include "trnav/sim.hpp"

namespace trnav {

using detail::Json;

namespace {

Json terrain_json(const TerrainSpec& t) {
  return {{"kind", to_string(t.kind)},         {"amplitude", t.amplitude},
          {"wavelength", t.wavelength},        {"seed", t.seed},
          {"width", t.width},                  {"height", t.height},
          {"cell_size", t.cell_size},          {"origin_x", t.origin_x},
          {"origin_y", t.origin_y},            {"base_elevation", t.base_elevation},
          {"roughness", t.roughness}};
}

TerrainSpec terrain_from_json(const Json& j) {
  const std::string w = "scenario.terrain";
  detail::require_keys(j,
                       {"kind", "amplitude", "wavelength", "seed", "width", "height", "cell_size",
                        "origin_x", "origin_y", "base_elevation", "roughness"},
                       w);
  TerrainSpec t;
  std::string kind = to_string(t.kind);
  detail::read_opt(j, "kind", kind, w);
  t.kind = terrain_kind_from_string(kind);
  detail::read_opt(j, "amplitude", t.amplitude, w);
  detail::read_opt(j, "wavelength", t.wavelength, w);
  detail::read_opt(j, "seed", t.seed, w);
  detail::read_opt(j, "width", t.width, w);
  detail::read_opt(j, "height", t.height, w);
  detail::read_opt(j, "cell_size", t.cell_size, w);
  detail::read_opt(j, "origin_x", t.origin_x, w);
  detail::read_opt(j, "origin_y", t.origin_y, w);
  detail::read_opt(j, "base_elevation", t.base_elevation, w);
  detail::read_opt(j, "roughness", t.roughness, w);
  return t;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void put_pose(std::ostream& out, const Pose& p) {
  const Vec3 a = detail::to_deg(p.attitude.as_vector());
  out << ',' << fmt(p.position.x()) << ',' << fmt(p.position.y()) << ',' << fmt(p.position.z()) << ','
      << fmt(a.x()) << ',' << fmt(a.y()) << ',' << fmt(a.z());
}

void put_error(std::ostream& out, const PoseError& e) {
  out << ',' << fmt(e.position.x()) << ',' << fmt(e.position.y()) << ',' << fmt(e.position.z()) << ','
      << fmt(e.position_norm()) << ',' << fmt(e.attitude_deg.x()) << ',' << fmt(e.attitude_deg.y())
      << ',' << fmt(e.attitude_deg.z());
}

std::vector<std::string> pose_columns(const std::string& prefix) {
  return {prefix + "_x", prefix + "_y", prefix + "_z", prefix + "_roll_deg", prefix + "_pitch_deg",
          prefix + "_yaw_deg"};
}

std::vector<std::string> error_columns(const std::string& prefix) {
  return {prefix + "_x",        prefix + "_y",         prefix + "_z",      prefix + "_norm",
          prefix + "_roll_deg", prefix + "_pitch_deg", prefix + "_yaw_deg"};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

Json summary_json(const ErrorSummary& s) {
  return {{"max_position_m", s.max_position},
          {"mean_position_m", s.mean_position},
          {"max_angle_deg", s.max_angle_deg},
          {"mean_angle_deg", s.mean_angle_deg}};
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& json_text) {
  const Json j = detail::parse_json(json_text, "scenario JSON");
  const std::string w = "scenario";
  detail::require_keys(
      j,
      {"terrain", "dtm_path", "speed", "duration", "altitude_msl", "heading_deg", "start_x", "start_y",
       "frame_interval", "pair_interval", "intrinsics", "n_features_side", "grid_margin_px",
       "flow_noise_px", "outlier_fraction", "ins_noise", "propagation", "solver", "seed", "description"},
      w);
  ScenarioConfig c;
  if (j.contains("terrain")) c.terrain = terrain_from_json(j.at("terrain"));
  std::string dtm_path;
  detail::read_opt(j, "dtm_path", dtm_path, w);
  c.dtm_path = dtm_path;
  detail::read_opt(j, "speed", c.speed, w);
  detail::read_opt(j, "duration", c.duration, w);
  detail::read_opt(j, "altitude_msl", c.altitude_msl, w);
  detail::read_opt(j, "heading_deg", c.heading_deg, w);
  detail::read_opt(j, "start_x", c.start_x, w);
  detail::read_opt(j, "start_y", c.start_y, w);
  detail::read_opt(j, "frame_interval", c.frame_interval, w);
  detail::read_opt(j, "pair_interval", c.pair_interval, w);
  if (j.contains("intrinsics")) c.intrinsics = detail::intrinsics_from_json(j.at("intrinsics"), w + ".intrinsics");
  detail::read_opt(j, "n_features_side", c.n_features_side, w);
  detail::read_opt(j, "grid_margin_px", c.grid_margin_px, w);
  detail::read_opt(j, "flow_noise_px", c.flow_noise_px, w);
  detail::read_opt(j, "outlier_fraction", c.outlier_fraction, w);
  if (j.contains("ins_noise")) {
    const Json& n = j.at("ins_noise");
    const std::string nw = w + ".ins_noise";
    detail::require_keys(n, {"velocity_rw_std", "attitude_rw_std_deg", "seed"}, nw);
    detail::read_opt(n, "velocity_rw_std", c.ins_noise.velocity_rw_std, nw);
    double att_deg = rad2deg(c.ins_noise.attitude_rw_std);
    detail::read_opt(n, "attitude_rw_std_deg", att_deg, nw);
    c.ins_noise.attitude_rw_std = deg2rad(att_deg);
    detail::read_opt(n, "seed", c.ins_noise.seed, nw);
  }
  std::string prop = to_string(c.propagation);
  detail::read_opt(j, "propagation", prop, w);
  c.propagation = propagation_from_string(prop);
  if (j.contains("solver")) c.solver = detail::solver_from_json(j.at("solver"), w + ".solver");
  detail::read_opt(j, "seed", c.seed, w);
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  ScenarioConfig c = parse_scenario(read_text_file(path));
  if (!c.dtm_path.empty() && c.dtm_path.is_relative()) c.dtm_path = path.parent_path() / c.dtm_path;
  return c;
}

std::string scenario_to_json(const ScenarioConfig& c) {
  Json j = {{"terrain", terrain_json(c.terrain)},
            {"speed", c.speed},
            {"duration", c.duration},
            {"altitude_msl", c.altitude_msl},
            {"heading_deg", c.heading_deg},
            {"frame_interval", c.frame_interval},
            {"pair_interval", c.pair_interval},
            {"intrinsics", detail::intrinsics_json(c.intrinsics)},
            {"n_features_side", c.n_features_side},
            {"grid_margin_px", c.grid_margin_px},
            {"flow_noise_px", c.flow_noise_px},
            {"outlier_fraction", c.outlier_fraction},
            {"ins_noise",
             {{"velocity_rw_std", c.ins_noise.velocity_rw_std},
              {"attitude_rw_std_deg", rad2deg(c.ins_noise.attitude_rw_std)},
              {"seed", c.ins_noise.seed}}},
            {"propagation", to_string(c.propagation)},
            {"solver", detail::solver_json(c.solver)},
            {"seed", c.seed}};
  if (!c.dtm_path.empty()) j["dtm_path"] = c.dtm_path.string();
  if (!std::isnan(c.start_x)) j["start_x"] = c.start_x;
  if (!std::isnan(c.start_y)) j["start_y"] = c.start_y;
  return j.dump(2) + "\n";
}

Dtm scenario_dtm(const ScenarioConfig& c) {
  if (!c.dtm_path.empty()) return load_esri_ascii(c.dtm_path);
  return generate_synthetic_dtm(c.terrain);
}

const std::vector<std::string>& report_csv_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"epoch", "t", "frame_first", "frame_second"};
    for (const char* p : {"true", "prop", "est"})
      for (auto& s : pose_columns(p)) c.push_back(s);
    for (const char* p : {"prop_err", "vis_err"})
      for (auto& s : error_columns(p)) c.push_back(s);
    for (const char* s : {"converged", "corrected", "iterations", "n_features", "method"}) c.push_back(s);
    return c;
  }();
  return cols;
}

void write_report_csv(const RunReport& report, std::ostream& out) {
  const auto& cols = report_csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const EpochRecord& e : report.epochs) {
    out << e.index << ',' << fmt(e.t) << ',' << e.frame_first << ',' << e.frame_second;
    put_pose(out, e.truth);
    put_pose(out, e.propagated);
    put_pose(out, e.estimated);
    put_error(out, e.propagated_error);
    put_error(out, e.vision_error);
    out << ',' << (e.converged ? 1 : 0) << ',' << (e.corrected ? 1 : 0) << ',' << e.iterations << ','
        << e.n_features << ',' << (e.method.empty() ? "none" : e.method) << '\n';
  }
}

std::vector<EpochRecord> read_report_csv(std::istream& in, const std::string& source_name) {
  const auto& cols = report_csv_columns();
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& why) -> Error {
    return Error(ErrorKind::Load, source_name + ":" + std::to_string(line_no) + ": " + why + ": '" + line + "'");
  };
  if (!std::getline(in, line)) throw Error(ErrorKind::Load, source_name + ": empty report CSV");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split_csv(line) != cols) throw fail("header does not match the report format");
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != cols.size()) throw fail("expected " + std::to_string(cols.size()) + " fields");
    std::vector<double> v(cells.size() - 1);
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
      std::size_t used = 0;
      try {
        v[i] = std::stod(cells[i], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[i].size()) throw fail("bad number in column '" + cols[i] + "'");
    }
    EpochRecord e;
    std::size_t k = 0;
    e.index = static_cast<int>(v[k++]);
    e.t = v[k++];
    e.frame_first = static_cast<int>(v[k++]);
    e.frame_second = static_cast<int>(v[k++]);
    auto pose = [&]() {
      Pose p;
      p.position = Vec3(v[k], v[k + 1], v[k + 2]);
      p.attitude = EulerAngles::from_vector(detail::to_rad(Vec3(v[k + 3], v[k + 4], v[k + 5])));
      k += 6;
      return p;
    };
    auto error = [&]() {
      PoseError pe;
      pe.position = Vec3(v[k], v[k + 1], v[k + 2]);
      pe.attitude_deg = Vec3(v[k + 4], v[k + 5], v[k + 6]);
      k += 7;
      return pe;
    };
    e.truth = pose();
    e.propagated = pose();
    e.estimated = pose();
    e.propagated_error = error();
    e.vision_error = error();
    e.converged = v[k++] != 0.0;
    e.corrected = v[k++] != 0.0;
    e.iterations = static_cast<int>(v[k++]);
    e.n_features = static_cast<int>(v[k++]);
    e.method = cells.back();
    out.push_back(e);
  }
  return out;
}

void write_tracks_csv(const RunReport& report, std::ostream& out) {
  out << "frame,t";
  for (const char* p : {"true", "prop", "nav"})
    for (auto& s : pose_columns(p)) out << ',' << s;
  out << '\n';
  for (std::size_t i = 0; i < report.truth_track.size(); ++i) {
    out << i << ',' << fmt(report.truth_track[i].t);
    put_pose(out, report.truth_track[i].pose);
    put_pose(out, report.propagated_track[i].pose);
    put_pose(out, report.navigation_track[i].pose);
    out << '\n';
  }
}

std::string report_summary_json(const RunReport& r) {
  Json notes = Json::array();
  for (const EpochRecord& e : r.epochs)
    if (!e.corrected) notes.push_back({{"epoch", e.index}, {"note", e.note}});
  const Json j = {{"seed", r.seed},
                  {"propagation", to_string(r.propagation)},
                  {"epochs", r.epochs.size()},
                  {"frames", r.truth_track.size()},
                  {"failed_epochs", r.failed_epochs},
                  {"propagated", summary_json(r.propagated_summary)},
                  {"vision", summary_json(r.vision_summary)},
                  {"failures", notes}};
  return j.dump(2) + "\n";
}

std::string monte_carlo_summary_json(const MonteCarloSummary& mc) {
  Json runs = Json::array();
  for (const RunReport& r : mc.reports) {
    runs.push_back({{"seed", r.seed},
                    {"vision_max_position_m", r.vision_summary.max_position},
                    {"vision_max_angle_deg", r.vision_summary.max_angle_deg},
                    {"propagated_max_position_m", r.propagated_summary.max_position},
                    {"failed_epochs", r.failed_epochs}});
  }
  const Json j = {{"runs", mc.runs},
                  {"median_max_position_m", mc.median_max_position},
                  {"p95_max_position_m", mc.p95_max_position},
                  {"median_max_angle_deg", mc.median_max_angle_deg},
                  {"p95_max_angle_deg", mc.p95_max_angle_deg},
                  {"median_max_position_propagated_m", mc.median_max_position_propagated},
                  {"failed_epochs", mc.failed_epochs},
                  {"per_seed", runs}};
  return j.dump(2) + "\n";
}

}  // namespace trnav
