#include "trnav/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "trnav/error.hpp"

namespace trnav {

namespace {

// Distinct RNG streams derived from one run seed.
enum Stream : std::uint64_t { kInsStream = 1, kFlowStream = 2, kOutlierStream = 3, kOpenLoopStream = 4 };

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t sub = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(sub)};
  return std::mt19937_64(seq);
}

int sample_count(const ScenarioConfig& c) {
  return static_cast<int>(std::floor(c.duration / c.frame_interval + 1e-9)) + 1;
}

// Dead reckoning between two truth samples: truth increments plus the INS
// error state (velocity and attitude random walks; position integrates the
// velocity error).
struct InsErrorState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 attitude = Vec3::Zero();

  void step(double dt, const InsNoiseModel& noise, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    position += velocity * dt;
    const double sv = noise.velocity_rw_std * std::sqrt(dt);
    const double sa = noise.attitude_rw_std * std::sqrt(dt);
    // Draw every variate even at zero std so streams stay aligned.
    for (int k = 0; k < 3; ++k) velocity[k] += sv * n01(rng);
    for (int k = 0; k < 3; ++k) attitude[k] += sa * n01(rng);
  }
};

Pose offset_pose(const Pose& base, const Vec3& dp, const Vec3& datt) {
  Pose p = base;
  p.position += dp;
  p.attitude = EulerAngles::from_vector(base.attitude.as_vector() + datt);
  return p;
}

}  // namespace

Propagation propagation_from_string(const std::string& name) {
  if (name == "ins") return Propagation::Ins;
  if (name == "constant-velocity") return Propagation::ConstantVelocity;
  throw Error(ErrorKind::Config, "unknown propagation '" + name + "'");
}

std::string to_string(Propagation p) {
  return p == Propagation::Ins ? "ins" : "constant-velocity";
}

int ScenarioConfig::frames_per_pair() const {
  return static_cast<int>(std::lround(pair_interval / frame_interval));
}

void ScenarioConfig::validate(const Dtm* dtm) const {
  if (!(speed > 0.0) || !(duration > 0.0) || !(frame_interval > 0.0) || !(pair_interval > 0.0)) {
    throw Error(ErrorKind::Config, "speed, duration, frame_interval and pair_interval must be > 0");
  }
  const double ratio = pair_interval / frame_interval;
  if (std::abs(ratio - std::round(ratio)) > 1e-6 || std::round(ratio) < 1) {
    throw Error(ErrorKind::Config, "pair_interval must be an integer multiple of frame_interval");
  }
  if (n_features_side < 2) throw Error(ErrorKind::Config, "n_features_side must be >= 2");
  if (!(flow_noise_px >= 0.0)) throw Error(ErrorKind::Config, "flow_noise_px must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "outlier_fraction must lie in [0, 1]");
  }
  if (!(ins_noise.velocity_rw_std >= 0.0) || !(ins_noise.attitude_rw_std >= 0.0)) {
    throw Error(ErrorKind::Config, "INS noise std must be >= 0");
  }
  if (!(grid_margin_px >= 0.0)) throw Error(ErrorKind::Config, "grid_margin_px must be >= 0");
  solver.validate();
  if (dtm && !(altitude_msl > dtm->max_elevation())) {
    throw Error(ErrorKind::Config, "altitude must exceed the terrain maximum");
  }
}

EulerAngles nadir_attitude(double heading_deg) {
  // R = Rz(yaw) Rx(pi): camera z down; camera -y (image top) along
  // (sin h, cos h, 0) when yaw = -h.
  return {std::numbers::pi, 0.0, wrap_angle(-deg2rad(heading_deg))};
}

std::vector<TrajectorySample> generate_trajectory(const ScenarioConfig& c, const Dtm& dtm) {
  c.validate(&dtm);
  const double h = deg2rad(c.heading_deg);
  const Vec3 dir(std::sin(h), std::cos(h), 0.0);
  const int n = sample_count(c);
  const double length = c.speed * (n - 1) * c.frame_interval;
  Vec3 start;
  if (std::isnan(c.start_x) || std::isnan(c.start_y)) {
    const Vec3 center(0.5 * (dtm.origin_x() + dtm.max_x()), 0.5 * (dtm.origin_y() + dtm.max_y()), 0.0);
    start = center - 0.5 * length * dir;
  } else {
    start = Vec3(c.start_x, c.start_y, 0.0);
  }
  start.z() = c.altitude_msl;
  const EulerAngles att = nadir_attitude(c.heading_deg);
  std::vector<TrajectorySample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    TrajectorySample s;
    s.t = k * c.frame_interval;
    s.pose.position = start + (c.speed * s.t) * dir;
    s.pose.attitude = att;
    s.velocity = c.speed * dir;
    out.push_back(s);
  }
  return out;
}

std::vector<TrajectorySample> simulate_ins(const std::vector<TrajectorySample>& truth,
                                           const InsNoiseModel& noise) {
  if (truth.size() < 2) throw Error(ErrorKind::Config, "INS simulation needs at least 2 samples");
  std::mt19937_64 rng = make_rng(noise.seed, kInsStream);
  InsErrorState err;
  std::vector<TrajectorySample> out;
  out.reserve(truth.size());
  out.push_back(truth.front());
  for (std::size_t k = 1; k < truth.size(); ++k) {
    err.step(truth[k].t - truth[k - 1].t, noise, rng);
    TrajectorySample s = truth[k];
    s.pose = offset_pose(truth[k].pose, err.position, err.attitude);
    s.velocity = truth[k].velocity + err.velocity;
    out.push_back(s);
  }
  return out;
}

std::vector<FlowFeature> render_flow(const Dtm& dtm, const CameraIntrinsics& k, const Pose& pose1,
                                     const Pose& pose2, const std::vector<Vec2>& seeds,
                                     double noise_px, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  const Mat3 r2 = rotation_from_euler(pose2.attitude);
  std::vector<FlowFeature> out;
  out.reserve(seeds.size());
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    // Noise is drawn for every seed so a dropped feature does not shift the
    // stream of the others.
    const Vec2 n1(noise_px * n01(rng), noise_px * n01(rng));
    const Vec2 n2(noise_px * n01(rng), noise_px * n01(rng));
    const Vec2& u1 = seeds[i];
    if (!k.in_bounds(u1)) continue;
    GroundAnchor hit;
    try {
      hit = ray_intersect(dtm, pose1.position, camera_ray_to_world(pose1, pixel_to_ray(k, u1)));
    } catch (const Error&) {
      continue;
    }
    const Vec3 in_c2 = r2.transpose() * (hit.point - pose2.position);
    if (!(in_c2.z() > 0.0)) continue;
    const ImageRay q2{in_c2 / in_c2.z()};
    const Vec2 u2(k.cx() + k.f_long() * q2.q.x(), k.cy() + k.f_short() * q2.q.y());
    if (!k.in_bounds(u2)) continue;
    FlowFeature f;
    f.id = static_cast<int>(i);
    f.u1 = u1 + n1;
    f.u2 = u2 + n2;
    if (!k.in_bounds(f.u1) || !k.in_bounds(f.u2)) continue;
    f.status = TrackStatus::Tracked;
    f.score = 1.0;
    out.push_back(f);
  }
  if (out.size() < 6) {
    throw Error(ErrorKind::DegenerateScenario,
                "only " + std::to_string(out.size()) + " features survive rendering (need 6)");
  }
  return out;
}

std::vector<FlowFeature> render_flow(const Dtm& dtm, const CameraIntrinsics& intrinsics,
                                     const Pose& pose1, const Pose& pose2,
                                     const std::vector<Vec2>& seeds, double noise_px,
                                     std::uint64_t seed) {
  std::mt19937_64 rng = make_rng(seed, kFlowStream);
  return render_flow(dtm, intrinsics, pose1, pose2, seeds, noise_px, rng);
}

PoseError pose_error(const Pose& estimate, const Pose& truth) {
  PoseError e;
  e.position = estimate.position - truth.position;
  const EulerAngles d = angle_difference(estimate.attitude, truth.attitude);
  e.attitude_deg = Vec3(rad2deg(d.roll), rad2deg(d.pitch), rad2deg(d.yaw));
  return e;
}

ErrorSummary summarize(const std::vector<EpochRecord>& epochs, bool vision) {
  ErrorSummary s;
  if (epochs.empty()) return s;
  for (const EpochRecord& e : epochs) {
    const PoseError& err = vision ? e.vision_error : e.propagated_error;
    s.max_position = std::max(s.max_position, err.position_norm());
    s.max_angle_deg = std::max(s.max_angle_deg, err.max_angle_deg());
    s.mean_position += err.position_norm();
    s.mean_angle_deg += err.max_angle_deg();
  }
  s.mean_position /= static_cast<double>(epochs.size());
  s.mean_angle_deg /= static_cast<double>(epochs.size());
  return s;
}

RunReport run_closed_loop(const ScenarioConfig& config) {
  const Dtm dtm = scenario_dtm(config);
  return run_closed_loop(config, dtm);
}

RunReport run_closed_loop(const ScenarioConfig& c, const Dtm& dtm) {
  c.validate(&dtm);
  const std::vector<TrajectorySample> truth = generate_trajectory(c, dtm);
  const int n = static_cast<int>(truth.size());
  const int m = c.frames_per_pair();
  const double dt = c.frame_interval;

  RunReport report;
  report.seed = c.seed;
  report.propagation = c.propagation;
  report.truth_track = truth;

  // Open-loop reference track: INS from the initial state, or straight-line
  // flight at the initial velocity.
  if (c.propagation == Propagation::Ins) {
    InsNoiseModel noise = c.ins_noise;
    noise.seed = c.ins_noise.seed ^ (c.seed * 0x9E3779B97F4A7C15ull) ^ kOpenLoopStream;
    report.propagated_track = simulate_ins(truth, noise);
  } else {
    for (const TrajectorySample& s : truth) {
      TrajectorySample p = s;
      p.pose.position = truth.front().pose.position + truth.front().velocity * s.t;
      p.pose.attitude = truth.front().pose.attitude;
      p.velocity = truth.front().velocity;
      report.propagated_track.push_back(p);
    }
  }

  const std::vector<Vec2> seeds = seed_regular_grid(c.intrinsics.width_px(), c.intrinsics.height_px(),
                                                    c.n_features_side, c.grid_margin_px);
  std::mt19937_64 ins_rng = make_rng(c.seed ^ c.ins_noise.seed, kInsStream);
  std::mt19937_64 flow_rng = make_rng(c.seed, kFlowStream);
  std::mt19937_64 outlier_rng = make_rng(c.seed, kOutlierStream);

  // Closed-loop navigation state at the last update.
  Pose nav_pose = truth.front().pose;
  Vec3 nav_velocity = truth.front().velocity;
  int nav_frame = 0;
  InsErrorState ins_err;

  report.navigation_track.resize(static_cast<std::size_t>(n));
  report.navigation_track[0] = truth.front();

  // Propagates the navigation state from nav_frame to frame k (exclusive of
  // the update itself) and records the intermediate samples.
  auto propagate_to = [&](int k) {
    for (int f = nav_frame + 1; f <= k; ++f) {
      TrajectorySample s;
      s.t = truth[static_cast<std::size_t>(f)].t;
      if (c.propagation == Propagation::Ins) {
        ins_err.step(dt, c.ins_noise, ins_rng);
        const Pose& t0 = truth[static_cast<std::size_t>(nav_frame)].pose;
        const Pose& tf = truth[static_cast<std::size_t>(f)].pose;
        s.pose.position = nav_pose.position + (tf.position - t0.position) + ins_err.position;
        s.pose.attitude = EulerAngles::from_vector(
            nav_pose.attitude.as_vector() + (tf.attitude.as_vector() - t0.attitude.as_vector()) +
            ins_err.attitude);
        s.velocity = truth[static_cast<std::size_t>(f)].velocity + ins_err.velocity;
      } else {
        s.pose.position = nav_pose.position + nav_velocity * (s.t - truth[static_cast<std::size_t>(nav_frame)].t);
        s.pose.attitude = nav_pose.attitude;
        s.velocity = nav_velocity;
      }
      report.navigation_track[static_cast<std::size_t>(f)] = s;
    }
  };

  auto reset_ins = [&](int frame) {
    ins_err = InsErrorState{};
    ins_err.velocity = nav_velocity - truth[static_cast<std::size_t>(frame)].velocity;
  };
  reset_ins(0);

  int epoch_index = 0;
  for (int a = 0; a + m < n; a += m, ++epoch_index) {
    const int b = a + m;
    // Navigation state at the first frame of the pair is the last update
    // (or its propagation when the previous update failed).
    const Pose guess1 = report.navigation_track[static_cast<std::size_t>(a)].pose;
    propagate_to(b);
    const Pose guess2 = report.navigation_track[static_cast<std::size_t>(b)].pose;

    EpochRecord rec;
    rec.index = epoch_index;
    rec.frame_first = a;
    rec.frame_second = b;
    rec.t = truth[static_cast<std::size_t>(b)].t;
    rec.truth = truth[static_cast<std::size_t>(b)].pose;
    rec.propagated = report.propagated_track[static_cast<std::size_t>(b)].pose;
    rec.propagated_error = pose_error(rec.propagated, rec.truth);
    rec.estimated = guess2;

    try {
      std::vector<FlowFeature> features =
          render_flow(dtm, c.intrinsics, truth[static_cast<std::size_t>(a)].pose,
                      truth[static_cast<std::size_t>(b)].pose, seeds, c.flow_noise_px, flow_rng);
      if (c.outlier_fraction > 0.0) {
        std::vector<std::size_t> order(features.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), outlier_rng);
        const auto n_out = static_cast<std::size_t>(std::lround(c.outlier_fraction * features.size()));
        std::uniform_real_distribution<double> ux(0.0, c.intrinsics.width_px());
        std::uniform_real_distribution<double> uy(0.0, c.intrinsics.height_px());
        for (std::size_t o = 0; o < n_out; ++o) features[order[o]].u2 = Vec2(ux(outlier_rng), uy(outlier_rng));
      }
      rec.n_features = static_cast<int>(features.size());

      EstimationProblem problem{std::shared_ptr<const Dtm>(&dtm, [](const Dtm*) {}), c.intrinsics,
                                std::move(features), pack_theta(guess1, relative_motion(guess1, guess2))};
      const EstimateResult est = solve(problem, c.solver);
      rec.converged = est.converged;
      rec.iterations = est.iterations;
      rec.method = to_string(est.method_used);
      rec.note = est.message;
      if (est.converged) {
        const Pose p1 = pose_of(est.theta);
        const Pose p2 = second_pose_of(est.theta);
        rec.estimated = p2;
        rec.corrected = true;
        nav_pose = p2;
        nav_velocity = (p2.position - p1.position) / (truth[static_cast<std::size_t>(b)].t -
                                                      truth[static_cast<std::size_t>(a)].t);
        report.navigation_track[static_cast<std::size_t>(b)].pose = p2;
        report.navigation_track[static_cast<std::size_t>(b)].velocity = nav_velocity;
      }
    } catch (const Error& e) {
      rec.note = e.what();
    }
    if (!rec.corrected) {
      ++report.failed_epochs;
      nav_pose = guess2;
      nav_velocity = report.navigation_track[static_cast<std::size_t>(b)].velocity;
    }
    nav_frame = b;
    reset_ins(b);
    rec.vision_error = pose_error(rec.estimated, rec.truth);
    report.epochs.push_back(rec);
  }
  propagate_to(n - 1);

  report.propagated_summary = summarize(report.epochs, false);
  report.vision_summary = summarize(report.epochs, true);
  return report;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = q * (values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

double median(std::vector<double> values) { return percentile(std::move(values), 0.5); }

MonteCarloSummary run_monte_carlo(const ScenarioConfig& config, int runs) {
  if (runs < 1) throw Error(ErrorKind::Config, "Monte Carlo needs at least one run");
  const Dtm dtm = scenario_dtm(config);
  config.validate(&dtm);
  MonteCarloSummary mc;
  mc.runs = runs;
  mc.reports.resize(static_cast<std::size_t>(runs));
  std::vector<std::string> errors(static_cast<std::size_t>(runs));
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < runs; ++i) {
    ScenarioConfig ci = config;
    ci.seed = config.seed + static_cast<std::uint64_t>(i);
    try {
      mc.reports[static_cast<std::size_t>(i)] = run_closed_loop(ci, dtm);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (const std::string& e : errors) {
    if (!e.empty()) throw Error(ErrorKind::Config, "Monte Carlo run failed: " + e);
  }
  std::vector<double> pos, ang, prop;
  for (const RunReport& r : mc.reports) {
    pos.push_back(r.vision_summary.max_position);
    ang.push_back(r.vision_summary.max_angle_deg);
    prop.push_back(r.propagated_summary.max_position);
    mc.failed_epochs += r.failed_epochs;
  }
  mc.median_max_position = median(pos);
  mc.p95_max_position = percentile(pos, 0.95);
  mc.median_max_angle_deg = median(ang);
  mc.p95_max_angle_deg = percentile(ang, 0.95);
  mc.median_max_position_propagated = median(prop);
  return mc;
}

}  // namespace trnav
