#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "trnav/error.hpp"
#include "trnav/estimator.hpp"
#include "trnav/flow.hpp"
#include "trnav/image.hpp"
#include "trnav/io.hpp"
#include "trnav/sim.hpp"
#include "trnav/terrain.hpp"

namespace trnav::cli {

namespace {

struct GlobalOptions {
  std::optional<std::uint64_t> seed;
  bool verbose = false;
  std::string output;
};

struct TerrainArgs {
  std::string kind = "fractal";
  std::string scenario;
  double amplitude = 200.0;
  double wavelength = 1000.0;
  double roughness = 0.8;
  int width = 257;
  int height = 257;
  double cell_size = 10.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double base = 0.0;
};

struct TrackArgs {
  std::vector<std::string> images;
  std::string seeding = "grid";
  int grid_side = 17;
  double margin = 32.0;
  int max_corners = 300;
  double min_spacing = 10.0;
  double min_score = 1e-6;
  int levels = 4;
  int radius = 7;
  double sigma = 3.5;
  int max_iters = 30;
  double eps = 0.01;
};

struct EstimateArgs {
  std::string flow_csv;
  std::string dtm;
  std::string problem;
};

struct SimulateArgs {
  std::string scenario;
  int monte_carlo = 0;
  std::optional<int> export_epoch;
  double export_offset_m = 0.0;
  double export_offset_deg = 0.0;
};

struct PlotArgs {
  std::string report;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Writes `text` to `path`, or to `out` when the path is empty.
void emit(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_text_file(path, text);
  }
}

// Stream that receives human-readable summaries: the output stream when
// machine output goes to a file, the error stream otherwise.
std::ostream& summary_stream(const GlobalOptions& g, std::ostream& out, std::ostream& err) {
  return g.output.empty() ? err : out;
}

int cmd_generate_terrain(const GlobalOptions& g, const TerrainArgs& a, std::ostream& out,
                         std::ostream& err) {
  TerrainSpec spec;
  if (!a.scenario.empty()) {
    spec = load_scenario(a.scenario).terrain;
  } else {
    spec.kind = terrain_kind_from_string(a.kind);
    spec.amplitude = a.amplitude;
    spec.wavelength = a.wavelength;
    spec.roughness = a.roughness;
    spec.width = a.width;
    spec.height = a.height;
    spec.cell_size = a.cell_size;
    spec.origin_x = a.origin_x;
    spec.origin_y = a.origin_y;
    spec.base_elevation = a.base;
  }
  if (g.seed) spec.seed = *g.seed;
  if (g.verbose) {
    err << "generating " << to_string(spec.kind) << " terrain " << spec.width << "x" << spec.height
        << " seed " << spec.seed << "\n";
  }
  const Dtm dtm = generate_synthetic_dtm(spec);
  save_esri_ascii(dtm, g.output);
  out << "wrote " << g.output << "\n"
      << "width " << dtm.width() << " height " << dtm.height() << " cell_size " << fmt(dtm.cell_size())
      << "\n"
      << "min_elevation " << fmt(dtm.min_elevation()) << " max_elevation " << fmt(dtm.max_elevation())
      << "\n";
  return kExitOk;
}

int cmd_track(const GlobalOptions& g, const TrackArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<GrayImage> frames;
  for (const std::string& path : a.images) {
    frames.push_back(load_pgm(path));
    const GrayImage& f = frames.back();
    if (f.width() != frames.front().width() || f.height() != frames.front().height()) {
      throw Error(ErrorKind::Domain, "image '" + path + "' is " + std::to_string(f.width()) + "x" +
                                         std::to_string(f.height()) + ", expected " +
                                         std::to_string(frames.front().width()) + "x" +
                                         std::to_string(frames.front().height()));
    }
  }

  TrackerConfig config;
  config.levels = a.levels;
  config.window = KernelWindow::gaussian(a.radius, a.sigma);
  config.max_iters = a.max_iters;
  config.eps = a.eps;

  std::vector<Vec2> points;
  if (a.seeding == "grid") {
    points = seed_regular_grid(frames[0].width(), frames[0].height(), a.grid_side, a.margin);
  } else {
    CornerOptions opts;
    opts.max_count = a.max_corners;
    opts.min_spacing = a.min_spacing;
    opts.min_score = a.min_score;
    points = detect_corners(frames[0], config.window, opts);
  }
  if (g.verbose) err << "tracking " << points.size() << " points over " << frames.size() << " frames\n";

  const std::vector<FlowFeature> features =
      frames.size() == 2 ? track_pyramidal(frames[0], frames[1], points, config)
                         : chain_tracks(frames, points, config);
  std::ostringstream csv;
  write_flow_csv(features, csv);
  emit(g.output, csv.str(), out);

  std::size_t tracked = 0;
  for (const FlowFeature& f : features) tracked += f.tracked() ? 1 : 0;
  summary_stream(g, out, err) << "tracked " << tracked << " lost " << features.size() - tracked << "\n";
  return kExitOk;
}

void print_theta(std::ostream& s, const std::string& label, const ParameterVector& th) {
  s << label << " p1 [" << fmt(th[0]) << ", " << fmt(th[1]) << ", " << fmt(th[2]) << "] m, attitude1 ["
    << fmt(rad2deg(th[3])) << ", " << fmt(rad2deg(th[4])) << ", " << fmt(rad2deg(th[5]))
    << "] deg, p12 [" << fmt(th[6]) << ", " << fmt(th[7]) << ", " << fmt(th[8])
    << "] m, relative attitude [" << fmt(rad2deg(th[9])) << ", " << fmt(rad2deg(th[10])) << ", "
    << fmt(rad2deg(th[11])) << "] deg\n";
}

int cmd_estimate(const GlobalOptions& g, const EstimateArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<FlowFeature> features = load_flow_csv(a.flow_csv);
  auto dtm = std::make_shared<const Dtm>(load_esri_ascii(a.dtm));
  const ProblemSidecar sidecar = load_problem_json(a.problem);
  if (g.verbose) {
    err << "estimating from " << features.size() << " features on a " << dtm->width() << "x"
        << dtm->height() << " DTM\n";
  }

  const EstimationProblem problem{dtm, sidecar.intrinsics, features, sidecar.initial_guess};
  const EstimateResult result = solve(problem, sidecar.solver);
  emit(g.output, estimate_result_json(result), out);

  std::ostream& s = summary_stream(g, out, err);
  print_theta(s, "theta", result.theta);
  s << "converged " << (result.converged ? "true" : "false") << " iterations " << result.iterations
    << " method " << to_string(result.method_used) << " objective " << fmt(result.objective) << "\n";
  if (!result.message.empty()) s << "message " << result.message << "\n";
  if (sidecar.truth) {
    const PoseError e1 = pose_error(pose_of(result.theta), pose_of(*sidecar.truth));
    const PoseError e2 = pose_error(second_pose_of(result.theta), second_pose_of(*sidecar.truth));
    s << "error vs truth: position " << fmt(std::max(e1.position_norm(), e2.position_norm()))
      << " m, angle " << fmt(std::max(e1.max_angle_deg(), e2.max_angle_deg())) << " deg\n";
  }
  return kExitOk;
}

int export_epoch(const GlobalOptions& g, const SimulateArgs& a, const ScenarioConfig& c,
                 std::ostream& out) {
  const Dtm dtm = scenario_dtm(c);
  c.validate(&dtm);
  const std::vector<TrajectorySample> truth = generate_trajectory(c, dtm);
  const int k = *a.export_epoch;
  const int fpp = c.frames_per_pair();
  const int first = k * fpp;
  const int second = first + fpp;
  if (k < 0 || second >= static_cast<int>(truth.size())) {
    throw Error(ErrorKind::Config, "export epoch " + std::to_string(k) + " is outside the flight (" +
                                       std::to_string((static_cast<int>(truth.size()) - 1) / fpp) +
                                       " epochs)");
  }
  const Pose& pose1 = truth[first].pose;
  const Pose& pose2 = truth[second].pose;
  const std::vector<Vec2> seeds = seed_regular_grid(c.intrinsics.width_px(), c.intrinsics.height_px(),
                                                    c.n_features_side, c.grid_margin_px);
  const std::vector<FlowFeature> features =
      render_flow(dtm, c.intrinsics, pose1, pose2, seeds, c.flow_noise_px, c.seed);

  ProblemSidecar sidecar;
  sidecar.intrinsics = c.intrinsics;
  sidecar.solver = c.solver;
  sidecar.truth = pack_theta(pose1, relative_motion(pose1, pose2));
  sidecar.initial_guess = *sidecar.truth;
  sidecar.initial_guess.segment<3>(theta_index::kPosition) +=
      a.export_offset_m * Vec3(1.0, -1.0, 1.0).normalized();
  sidecar.initial_guess.segment<3>(theta_index::kAttitude).array() += deg2rad(a.export_offset_deg);

  const std::string stem = g.output + "_epoch" + std::to_string(k);
  save_flow_csv(features, stem + "_flow.csv");
  save_esri_ascii(dtm, stem + "_dtm.asc");
  write_text_file(stem + "_problem.json", problem_to_json(sidecar));
  out << "wrote " << stem << "_flow.csv " << stem << "_dtm.asc " << stem << "_problem.json\n"
      << "epoch " << k << " frames " << first << "-" << second << " features " << features.size()
      << "\n";
  return kExitOk;
}

void write_run_files(const RunReport& r, const std::string& stem, std::ostream& out) {
  std::ostringstream report, tracks;
  write_report_csv(r, report);
  write_tracks_csv(r, tracks);
  write_text_file(stem + "_report.csv", report.str());
  write_text_file(stem + "_tracks.csv", tracks.str());
  write_text_file(stem + "_summary.json", report_summary_json(r));
  out << "wrote " << stem << "_report.csv " << stem << "_tracks.csv " << stem << "_summary.json\n";
}

void print_run_summary(const RunReport& r, std::ostream& s) {
  s << "seed " << r.seed << " epochs " << r.epochs.size() << " failed " << r.failed_epochs
    << " vision max position " << fmt(r.vision_summary.max_position) << " m max angle "
    << fmt(r.vision_summary.max_angle_deg) << " deg; propagated max position "
    << fmt(r.propagated_summary.max_position) << " m\n";
}

int cmd_simulate(const GlobalOptions& g, const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  ScenarioConfig c = load_scenario(a.scenario);
  if (g.seed) c.seed = *g.seed;
  if (a.export_epoch) return export_epoch(g, a, c, out);

  if (a.monte_carlo > 0) {
    const MonteCarloSummary mc = run_monte_carlo(c, a.monte_carlo);
    for (const RunReport& r : mc.reports) {
      write_run_files(r, g.output + "_seed" + std::to_string(r.seed), out);
      if (g.verbose) print_run_summary(r, err);
    }
    write_text_file(g.output + "_montecarlo.json", monte_carlo_summary_json(mc));
    out << "wrote " << g.output << "_montecarlo.json\n"
        << "runs " << mc.runs << " median max position " << fmt(mc.median_max_position)
        << " m (p95 " << fmt(mc.p95_max_position) << ") median max angle "
        << fmt(mc.median_max_angle_deg) << " deg (p95 " << fmt(mc.p95_max_angle_deg)
        << ") failed epochs " << mc.failed_epochs << "\n";
    return kExitOk;
  }

  const RunReport r = run_closed_loop(c);
  if (g.verbose) {
    for (const EpochRecord& e : r.epochs) {
      err << "epoch " << e.index << " t " << fmt(e.t) << " features " << e.n_features << " "
          << (e.corrected ? "corrected" : "uncorrected") << " vision error "
          << fmt(e.vision_error.position_norm()) << " m" << (e.note.empty() ? "" : " (" + e.note + ")")
          << "\n";
    }
  }
  write_run_files(r, g.output, out);
  print_run_summary(r, out);
  return kExitOk;
}

const std::vector<std::string>& trajectory_columns() {
  static const std::vector<std::string> cols = {"epoch",  "t",      "true_x", "true_y",
                                                "true_z", "prop_x", "prop_y", "prop_z",
                                                "vis_x",  "vis_y",  "vis_z"};
  return cols;
}

const std::vector<std::string>& error_columns() {
  static const std::vector<std::string> cols = {
      "epoch",          "t",
      "vis_err_x",      "vis_err_y",         "vis_err_z",        "vis_err_norm",
      "vis_err_roll_deg", "vis_err_pitch_deg", "vis_err_yaw_deg",
      "prop_err_x",     "prop_err_y",        "prop_err_z",       "prop_err_norm",
      "prop_err_roll_deg", "prop_err_pitch_deg", "prop_err_yaw_deg"};
  return cols;
}

std::string tsv_row(const std::vector<std::string>& cells) {
  std::string line;
  for (std::size_t i = 0; i < cells.size(); ++i) line += (i ? "\t" : "") + cells[i];
  return line + "\n";
}

int cmd_plot_data(const GlobalOptions& g, const PlotArgs& a, std::ostream& out, std::ostream& err) {
  std::ifstream in(a.report);
  if (!in) throw Error(ErrorKind::Load, "cannot open report '" + a.report + "'");
  const std::vector<EpochRecord> epochs = read_report_csv(in, a.report);

  std::string traj = tsv_row(trajectory_columns());
  std::string errs = tsv_row(error_columns());
  for (const EpochRecord& e : epochs) {
    std::vector<std::string> row = {std::to_string(e.index), fmt(e.t)};
    for (const Pose* p : {&e.truth, &e.propagated, &e.estimated})
      for (int k = 0; k < 3; ++k) row.push_back(fmt(p->position[k]));
    traj += tsv_row(row);

    row = {std::to_string(e.index), fmt(e.t)};
    for (const PoseError* pe : {&e.vision_error, &e.propagated_error}) {
      for (int k = 0; k < 3; ++k) row.push_back(fmt(pe->position[k]));
      row.push_back(fmt(pe->position_norm()));
      for (int k = 0; k < 3; ++k) row.push_back(fmt(pe->attitude_deg[k]));
    }
    errs += tsv_row(row);
  }
  write_text_file(g.output + "_trajectory.tsv", traj);
  write_text_file(g.output + "_errors.tsv", errs);
  if (g.verbose) err << "read " << epochs.size() << " epochs from " << a.report << "\n";
  out << "wrote " << g.output << "_trajectory.tsv " << g.output << "_errors.tsv (" << epochs.size()
      << " rows)\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Terrain-relative navigation from optical flow and a digital terrain map"};
  app.name(args.empty() ? "trnav" : args.front());
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "RNG seed (terrain seed for generate-terrain, run seed for simulate)");
  app.add_flag("-v,--verbose", g.verbose, "Progress details on the error stream");
  app.add_option("-o,--output", g.output,
                 "Output file (generate-terrain, track, estimate) or file prefix (simulate, plot-data)");

  TerrainArgs ta;
  auto* gen = app.add_subcommand("generate-terrain", "Write a synthetic DTM as an ESRI ASCII grid");
  gen->add_option("--kind", ta.kind, "flat | ramp | sinusoidal | fractal")
      ->check(CLI::IsMember({"flat", "ramp", "sinusoidal", "fractal"}));
  gen->add_option("--scenario", ta.scenario, "Take the terrain spec from a scenario JSON")
      ->check(CLI::ExistingFile);
  gen->add_option("--amplitude", ta.amplitude, "Relief amplitude, m");
  gen->add_option("--wavelength", ta.wavelength, "Wavelength, m");
  gen->add_option("--roughness", ta.roughness, "Fractal Hurst exponent");
  gen->add_option("--width", ta.width, "Nodes along x")->check(CLI::Range(2, 1 << 15));
  gen->add_option("--height", ta.height, "Nodes along y")->check(CLI::Range(2, 1 << 15));
  gen->add_option("--cell-size", ta.cell_size, "Node spacing, m")->check(CLI::PositiveNumber);
  gen->add_option("--origin-x", ta.origin_x, "x of node (0, 0), m");
  gen->add_option("--origin-y", ta.origin_y, "y of node (0, 0), m");
  gen->add_option("--base", ta.base, "Base elevation, m");

  TrackArgs tr;
  auto* track = app.add_subcommand("track", "Track features through two or more PGM frames");
  track->add_option("images", tr.images, "PGM frames in time order")->required()->expected(2, -1);
  track->add_option("--seeding", tr.seeding, "grid | corners")->check(CLI::IsMember({"grid", "corners"}));
  track->add_option("--grid-side", tr.grid_side, "Grid points per side")->check(CLI::Range(2, 1000));
  track->add_option("--margin", tr.margin, "Grid margin, px")->check(CLI::NonNegativeNumber);
  track->add_option("--max-corners", tr.max_corners, "Corner budget")->check(CLI::PositiveNumber);
  track->add_option("--min-spacing", tr.min_spacing, "Minimum corner spacing, px")
      ->check(CLI::NonNegativeNumber);
  track->add_option("--min-score", tr.min_score, "Minimum Shi-Tomasi score")->check(CLI::NonNegativeNumber);
  track->add_option("--levels", tr.levels, "Pyramid levels")->check(CLI::Range(1, 12));
  track->add_option("--radius", tr.radius, "Window radius, px")->check(CLI::Range(1, 64));
  track->add_option("--sigma", tr.sigma, "Gaussian window sigma, px")->check(CLI::PositiveNumber);
  track->add_option("--max-iters", tr.max_iters, "LK iterations per level")->check(CLI::PositiveNumber);
  track->add_option("--eps", tr.eps, "Increment norm that ends a level, px")->check(CLI::PositiveNumber);

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Estimate pose and ego-motion for one measurement pair");
  est->add_option("flow", ea.flow_csv, "Flow CSV")->required();
  est->add_option("dtm", ea.dtm, "ESRI ASCII DTM")->required();
  est->add_option("problem", ea.problem, "Problem JSON (intrinsics, initial guess, solver)")->required();

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Closed-loop flight simulation");
  sim->add_option("scenario", sa.scenario, "Scenario JSON")->required();
  sim->add_option("--monte-carlo", sa.monte_carlo, "Number of seeds to run")->check(CLI::PositiveNumber);
  sim->add_option("--export-epoch", sa.export_epoch,
                  "Write flow CSV, DTM and problem JSON (with truth) for one epoch instead")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("--export-offset-m", sa.export_offset_m, "Initial-guess position offset, m");
  sim->add_option("--export-offset-deg", sa.export_offset_deg, "Initial-guess attitude offset, deg");

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot-data", "Turn a report CSV into plot-ready series files");
  plot->add_option("report", pa.report, "Report CSV written by simulate")->required();

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
    const bool needs_output = gen->parsed() || sim->parsed() || plot->parsed();
    if (needs_output && g.output.empty()) {
      throw CLI::RequiredError("--output is required for this subcommand");
    }
    if (sim->parsed() && sa.export_epoch && sa.monte_carlo > 0) {
      throw CLI::ValidationError("--export-epoch and --monte-carlo are mutually exclusive");
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate_terrain(g, ta, out, err);
    if (track->parsed()) return cmd_track(g, tr, out, err);
    if (est->parsed()) return cmd_estimate(g, ea, out, err);
    if (sim->parsed()) return cmd_simulate(g, sa, out, err);
    if (plot->parsed()) return cmd_plot_data(g, pa, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  return kExitUsage;
}

}  // namespace trnav::cli
