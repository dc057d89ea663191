#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trnav/estimator.hpp"
#include "trnav/flow.hpp"
#include "trnav/geometry.hpp"
#include "trnav/terrain.hpp"

namespace trnav {

/// Velocity and attitude random walks, per axis.
struct InsNoiseModel {
  double velocity_rw_std = 20.0;            // m/s per sqrt(s)
  double attitude_rw_std = deg2rad(0.33);   // rad per sqrt(s)
  std::uint64_t seed = 0;
};

enum class Propagation { Ins, ConstantVelocity };
Propagation propagation_from_string(const std::string& name);
std::string to_string(Propagation p);

struct ScenarioConfig {
  TerrainSpec terrain;                      // used when dtm_path is empty
  std::filesystem::path dtm_path;
  double speed = 50.0;                      // m/s
  double duration = 19.6;                   // s
  double altitude_msl = 1000.0;             // m
  double heading_deg = 90.0;                // compass, 0 = north (+y), 90 = east (+x)
  /// Horizontal start position; NaN centers the track on the DTM.
  double start_x = std::numeric_limits<double>::quiet_NaN();
  double start_y = std::numeric_limits<double>::quiet_NaN();
  double frame_interval = 0.4;              // s
  double pair_interval = 3.6;               // s
  CameraIntrinsics intrinsics{4800, 2923, 59.97, 38.68};
  int n_features_side = 17;
  double grid_margin_px = 0.0;
  double flow_noise_px = 1.0;
  double outlier_fraction = 0.0;            // features whose u2 is replaced by a uniform pixel
  InsNoiseModel ins_noise;
  Propagation propagation = Propagation::Ins;
  SolverConfig solver;
  std::uint64_t seed = 1;

  /// Throws Error{Config} on any violated invariant.
  void validate(const Dtm* dtm = nullptr) const;
  int frames_per_pair() const;
};

struct TrajectorySample {
  double t = 0.0;
  Pose pose;
  Vec3 velocity = Vec3::Zero();
};

/// Nadir camera, image long side across track, image top pointing along the
/// direction of flight.
EulerAngles nadir_attitude(double heading_deg);

/// Straight, level, constant-velocity flight sampled at the frame interval.
std::vector<TrajectorySample> generate_trajectory(const ScenarioConfig& config, const Dtm& dtm);

/// Dead-reckoned track from truth increments plus random-walk velocity and
/// attitude errors (std * sqrt(dt) per step and axis); starts on truth.
std::vector<TrajectorySample> simulate_ins(const std::vector<TrajectorySample>& truth,
                                           const InsNoiseModel& noise);

/// Synthetic flow for a pair of poses: each seed ray from pose1 is cast onto
/// the DTM and reprojected into pose2; Gaussian pixel noise is added to both
/// ends. Features leaving frame 2 or missing the DTM are dropped; ids are the
/// seed indices. Throws Error{DegenerateScenario} with fewer than 6 survivors.
std::vector<FlowFeature> render_flow(const Dtm& dtm, const CameraIntrinsics& intrinsics,
                                     const Pose& pose1, const Pose& pose2,
                                     const std::vector<Vec2>& seeds, double noise_px,
                                     std::mt19937_64& rng);
std::vector<FlowFeature> render_flow(const Dtm& dtm, const CameraIntrinsics& intrinsics,
                                     const Pose& pose1, const Pose& pose2,
                                     const std::vector<Vec2>& seeds, double noise_px = 0.0,
                                     std::uint64_t seed = 0);

struct PoseError {
  Vec3 position = Vec3::Zero();   // m, estimate - truth
  Vec3 attitude_deg = Vec3::Zero();  // roll, pitch, yaw; wrapped
  double position_norm() const { return position.norm(); }
  double max_angle_deg() const { return attitude_deg.cwiseAbs().maxCoeff(); }
};
PoseError pose_error(const Pose& estimate, const Pose& truth);

struct EpochRecord {
  int index = 0;
  double t = 0.0;                 // time of the second frame of the pair
  int frame_first = 0;
  int frame_second = 0;
  Pose truth;
  Pose propagated;                // open-loop propagation from the initial state
  Pose estimated;                 // closed-loop navigation state after the update
  PoseError propagated_error;
  PoseError vision_error;
  bool converged = false;
  bool corrected = false;         // false when the update failed and propagation continued
  int iterations = 0;
  int n_features = 0;
  std::string method;
  std::string note;
};

struct ErrorSummary {
  double max_position = 0.0;
  double mean_position = 0.0;
  double max_angle_deg = 0.0;
  double mean_angle_deg = 0.0;
};

struct RunReport {
  std::uint64_t seed = 0;
  Propagation propagation = Propagation::Ins;
  std::vector<EpochRecord> epochs;
  /// Per frame: truth, open-loop propagated, closed-loop navigation.
  std::vector<TrajectorySample> truth_track;
  std::vector<TrajectorySample> propagated_track;
  std::vector<TrajectorySample> navigation_track;
  ErrorSummary propagated_summary;
  ErrorSummary vision_summary;
  int failed_epochs = 0;
};

ErrorSummary summarize(const std::vector<EpochRecord>& epochs, bool vision);

/// Full closed-loop flight: propagate, render a measurement pair, estimate,
/// replace the navigation state, continue.
RunReport run_closed_loop(const ScenarioConfig& config);
RunReport run_closed_loop(const ScenarioConfig& config, const Dtm& dtm);

struct MonteCarloSummary {
  int runs = 0;
  std::vector<RunReport> reports;   // seed order
  double median_max_position = 0.0;
  double p95_max_position = 0.0;
  double median_max_angle_deg = 0.0;
  double p95_max_angle_deg = 0.0;
  double median_max_position_propagated = 0.0;
  int failed_epochs = 0;
};

/// Runs seeds config.seed, config.seed + 1, ... in parallel; results merged
/// in seed order.
MonteCarloSummary run_monte_carlo(const ScenarioConfig& config, int runs);

double percentile(std::vector<double> values, double q);
double median(std::vector<double> values);

/// Scenario JSON (meters, seconds, degrees, pixels).
ScenarioConfig load_scenario(const std::filesystem::path& path);
ScenarioConfig parse_scenario(const std::string& json_text);
std::string scenario_to_json(const ScenarioConfig& config);
/// Terrain for a scenario: the DTM file when given, else the synthetic spec.
Dtm scenario_dtm(const ScenarioConfig& config);

/// Report CSV: one row per epoch with the columns of report_csv_columns().
/// Positions in meters, angles and angle errors in degrees.
const std::vector<std::string>& report_csv_columns();
void write_report_csv(const RunReport& report, std::ostream& out);
/// Reads a report CSV back into epoch records (the note column is not
/// stored). Throws Error{Load} with the offending line on malformed input.
std::vector<EpochRecord> read_report_csv(std::istream& in, const std::string& source_name = "<stream>");
/// Tracks CSV: one row per frame with truth, open-loop propagated and
/// closed-loop navigation poses.
void write_tracks_csv(const RunReport& report, std::ostream& out);
std::string report_summary_json(const RunReport& report);
std::string monte_carlo_summary_json(const MonteCarloSummary& summary);

}  // namespace trnav
