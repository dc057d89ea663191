// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Every tolerance is pinned here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "trnav/error.hpp"
#include "trnav/estimator.hpp"
#include "trnav/flow.hpp"
#include "trnav/sim.hpp"
#include "trnav/terrain.hpp"
#include "test_support.hpp"

using namespace trnav;

namespace {

// Pinned tolerances.
constexpr double kTruthResidualMax = 1e-10;
constexpr int kBasinScenes = 100;
constexpr int kBasinRequired = 99;
constexpr double kBasinOffsetM = 100.0;
constexpr double kBasinOffsetDeg = 2.0;
constexpr double kBasinPosTol = 0.1;
constexpr double kBasinAngTol = 0.01;
constexpr int kMonteCarloSeeds = 20;
constexpr double kInsPosBound = 20.0;
constexpr double kInsAngBound = 0.83;
constexpr double kCvPosBound = 30.0;
constexpr double kCvAngBound = 2.2;
constexpr int kRays = 100;
constexpr double kRayTolCells = 0.01;
constexpr int kJacobianThetas = 20;
constexpr double kJacobianRelTol = 1e-4;
constexpr double kJacobianFloor = 1e-8;
constexpr double kMaxShiftPx = 12.0;
constexpr double kShiftMeanTol = 0.25;
constexpr double kShiftMaxTol = 0.5;
constexpr double kSumTol = 1e-12;
constexpr double kOutlierFraction = 0.10;
constexpr double kHuberRatio = 2.0;
constexpr double kNoneRatio = 2.0;
constexpr int kProjectorSamples = 100000;
constexpr double kProjectorTol = 1e-12;

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %d: %s  %s  (%.1f s)\n", id, pass ? "PASS" : "FAIL", detail.c_str(), seconds);
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ScenarioConfig shipped_scenario() {
  return load_scenario(std::filesystem::path(TRNAV_SOURCE_DIR) / "scenarios" / "xiaoshan-like.json");
}

void criterion1() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const test::Scene s = test::random_scene(1000 + k);
    const AnchorSet a = anchor_features(s.problem, s.truth);
    worst = std::max(worst, residual_stack(s.problem, s.truth, a).values.cwiseAbs().maxCoeff());
  }
  report(1, worst <= kTruthResidualMax, fmt("max |F(theta_true)| = %.3g (limit %.0e) over 100 scenes", worst,
                                            kTruthResidualMax),
         elapsed(t0));
}

void criterion2() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<int> ok(kBasinScenes, 0);
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < kBasinScenes; ++k) {
    test::Scene s = test::random_scene(2000 + k);
    s.problem.initial_guess = test::offset_guess(s.truth, kBasinOffsetM, kBasinOffsetDeg, 2000 + k);
    try {
      const EstimateResult r = solve(s.problem, SolverConfig{});
      const test::ThetaError e = test::theta_error(r.theta, s.truth);
      ok[k] = r.converged && e.position <= kBasinPosTol && e.angle_deg <= kBasinAngTol;
    } catch (const Error&) {
      ok[k] = 0;
    }
  }
  const int n = std::count(ok.begin(), ok.end(), 1);
  report(2, n >= kBasinRequired,
         fmt("%d/%d scenes recovered within %.1f m / %.2f deg (need %d)", n, kBasinScenes, kBasinPosTol,
             kBasinAngTol, kBasinRequired),
         elapsed(t0));
}

struct Medians {
  double pos, ang;
};

Medians criterion3() {
  const auto t0 = std::chrono::steady_clock::now();
  const MonteCarloSummary mc = run_monte_carlo(shipped_scenario(), kMonteCarloSeeds);
  const Medians m{mc.median_max_position, mc.median_max_angle_deg};
  report(3, m.pos <= kInsPosBound && m.ang <= kInsAngBound,
         fmt("INS: median max position %.2f m (<= %.0f), median max angle %.3f deg (<= %.2f), %d seeds", m.pos,
             kInsPosBound, m.ang, kInsAngBound, kMonteCarloSeeds),
         elapsed(t0));
  return m;
}

void criterion4(const Medians& ins) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig c = shipped_scenario();
  c.propagation = Propagation::ConstantVelocity;
  const MonteCarloSummary mc = run_monte_carlo(c, kMonteCarloSeeds);
  const double p = mc.median_max_position, a = mc.median_max_angle_deg;
  const bool bounds = p <= kCvPosBound && a <= kCvAngBound;
  const bool worse = p > ins.pos && a > ins.ang;
  report(4, bounds && worse,
         fmt("constant velocity: median max position %.2f m (<= %.0f), angle %.3f deg (<= %.1f) [%s]; "
             "strictly worse than INS (%.2f m, %.3f deg) [%s]",
             p, kCvPosBound, a, kCvAngBound, bounds ? "ok" : "exceeded", ins.pos, ins.ang, worse ? "ok" : "no"),
         elapsed(t0));
}

void criterion5() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(5005);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  // Rays are drawn until kRays of them hit the terrain per the oracle;
  // misses and spurious hits are counted over every ray drawn.
  int rays = 0, missed = 0, spurious = 0, hits = 0;
  double worst = 0.0;
  for (int scene = 0; hits < kRays; ++scene) {
    TerrainSpec spec = test::scene_terrain(500 + scene, 0.6 + 0.1 * (scene % 5));
    spec.width = spec.height = 129;
    const Dtm d = generate_synthetic_dtm(spec);
    for (int k = 0; k < 10 && hits < kRays; ++k, ++rays) {
      const Vec3 o(d.origin_x() + u(rng) * (d.max_x() - d.origin_x()),
                   d.origin_y() + u(rng) * (d.max_y() - d.origin_y()), d.max_elevation() + 50 + 800 * u(rng));
      const double az = 2 * std::numbers::pi * u(rng);
      const double el = deg2rad(10.0 + 80.0 * u(rng));
      const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), -std::sin(el));
      const auto oracle = test::march_oracle(d, o, dir, d.cell_size() / 100.0);
      try {
        const GroundAnchor a = ray_intersect(d, o, dir);
        if (!oracle) {
          ++spurious;
          continue;
        }
        ++hits;
        worst = std::max(worst, std::abs(a.depth - *oracle) / d.cell_size());
      } catch (const Error&) {
        if (oracle) ++missed;
      }
    }
  }
  report(5, missed == 0 && spurious == 0 && worst <= kRayTolCells,
         fmt("%d rays drawn, %d oracle hits, worst depth gap %.2e cells (<= %.2f), %d missed, %d spurious", rays, hits, worst,
             kRayTolCells, missed, spurious),
         elapsed(t0));
}

void criterion6() {
  const auto t0 = std::chrono::steady_clock::now();
  long checked = 0, bad = 0;
  double worst = 0.0;
  for (int k = 0; k < kJacobianThetas; ++k) {
    const test::Scene s = test::random_scene(6000 + k);
    const ParameterVector th = test::offset_guess(s.truth, 50.0, 1.0, 6000 + k);
    const AnchorSet a = anchor_features(s.problem, th);
    const JacobianMatrix jf = jacobian(s.problem, th, a);
    const JacobianMatrix jc = jacobian_central(s.problem, th, a);
    for (Eigen::Index r = 0; r < jc.rows(); ++r) {
      for (int c = 0; c < 12; ++c) {
        if (std::abs(jc(r, c)) <= kJacobianFloor) continue;
        ++checked;
        const double rel = std::abs(jf(r, c) - jc(r, c)) / std::abs(jc(r, c));
        worst = std::max(worst, rel);
        bad += rel > kJacobianRelTol;
      }
    }
  }
  report(6, bad == 0,
         fmt("%ld/%ld entries above %.0e exceed %.0e relative; worst %.2e", bad, checked, kJacobianFloor,
             kJacobianRelTol, worst),
         elapsed(t0));
}

void criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  // Margins keep every window on every level of the four-level pyramid.
  const int w = 384, h = 384;
  std::mt19937_64 rng(7007);
  std::uniform_real_distribution<double> shift(-kMaxShiftPx, kMaxShiftPx);
  const auto pts = seed_regular_grid(w, h, 8, 100.0);
  double sum = 0.0, worst = 0.0;
  int n = 0, lost = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const test::WaveTexture tex(100 + trial);
    Vec2 d(shift(rng), shift(rng));
    if (trial == 0) d = Vec2(kMaxShiftPx, -kMaxShiftPx);
    const GrayImage a = tex.render(w, h), b = tex.render(w, h, d.x(), d.y());
    for (const FlowFeature& f : track_pyramidal(a, b, pts, TrackerConfig{})) {
      if (!f.tracked()) {
        ++lost;
        continue;
      }
      const double e = (f.flow() - d).norm();
      sum += e;
      worst = std::max(worst, e);
      ++n;
    }
  }
  const double mean = n ? sum / n : INFINITY;

  // Structure tensor and LK right-hand side against the naive double loop.
  double sum_gap = 0.0;
  std::uniform_real_distribution<double> pos(30.0, 220.0), g(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    const test::WaveTexture tex(300 + trial);
    const GrayImage a = tex.render(w, h), b = tex.render(w, h, g(rng), g(rng));
    const Vec2 c = trial % 2 ? Vec2(std::round(pos(rng)), std::round(pos(rng))) : Vec2(pos(rng), pos(rng));
    const Vec2 guess(g(rng), g(rng));
    const Mat2 slow = reference::structure_tensor(a, c, default_window());
    sum_gap = std::max(sum_gap, (structure_tensor(a, c, default_window()) - slow).cwiseAbs().maxCoeff());
    const Vec2 rhs = reference::lk_rhs(a, b, c, guess, default_window());
    sum_gap = std::max(sum_gap, (slow * lk_step(a, b, c, guess, default_window()) - rhs).cwiseAbs().maxCoeff());
  }
  report(7, lost == 0 && mean <= kShiftMeanTol && worst <= kShiftMaxTol && sum_gap <= kSumTol,
         fmt("shifts up to %.0f px: mean %.4f px (<= %.2f), max %.4f px (<= %.2f), %d lost; sum gap %.2e (<= %.0e)",
             kMaxShiftPx, mean, kShiftMeanTol, worst, kShiftMaxTol, lost, sum_gap, kSumTol),
         elapsed(t0));
}

void criterion8(const Medians& clean) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioConfig c = shipped_scenario();
  c.outlier_fraction = kOutlierFraction;
  c.solver.mestimator = MEstimator::huber(1.345);
  const double huber = run_monte_carlo(c, kMonteCarloSeeds).median_max_position;
  c.solver.mestimator = MEstimator::none();
  const double none = run_monte_carlo(c, kMonteCarloSeeds).median_max_position;
  const bool a = huber <= kHuberRatio * clean.pos;
  const bool b = none >= kNoneRatio * huber;
  report(8, a && b,
         fmt("10%% outliers: Huber median %.2f m vs %.0fx clean %.2f m = %.2f m [%s]; none %.2f m vs %.0fx Huber [%s]",
             huber, kHuberRatio, clean.pos, kHuberRatio * clean.pos, a ? "ok" : "exceeded", none, kNoneRatio,
             b ? "ok" : "no"),
         elapsed(t0));
}

void criterion9() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(9009);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double tx = std::tan(deg2rad(59.97 / 2)), ty = std::tan(deg2rad(38.68 / 2));
  double idem = 0.0, null = 0.0, orth = 0.0, norm = 0.0;
  int evaluated = 0;
  for (int i = 0; i < kProjectorSamples; ++i) {
    ParameterVector t;
    t.segment<3>(0) = Vec3(5000 * u(rng), 5000 * u(rng), 1000 + 500 * u(rng));
    t.segment<3>(3) = Vec3(std::numbers::pi * u(rng), deg2rad(80) * u(rng), std::numbers::pi * u(rng));
    t.segment<3>(6) = 300.0 * Vec3(u(rng), u(rng), u(rng));
    t.segment<3>(9) = deg2rad(10) * Vec3(u(rng), u(rng), u(rng));
    GroundAnchor a;
    a.point = Vec3(5000 * u(rng), 5000 * u(rng), 300 * u(rng));
    a.normal = Vec3(u(rng), u(rng), 1.0 + std::abs(u(rng))).normalized();
    const ImageRay q1{Vec3(tx * u(rng), ty * u(rng), 1.0)};
    const ImageRay q2{Vec3(tx * u(rng), ty * u(rng), 1.0)};
    Vec3 f;
    try {
      f = residual_single(t, a, q1, q2);
    } catch (const Error&) {
      continue;  // grazing / degenerate inputs are outside the valid domain
    }
    ++evaluated;
    const Vec3& q = q2.q;
    const Mat3 p = Mat3::Identity() - q * q.transpose() / q.squaredNorm();
    idem = std::max(idem, (p * p - p).cwiseAbs().maxCoeff());
    null = std::max(null, (p * q).cwiseAbs().maxCoeff());
    orth = std::max(orth, std::abs(f.dot(q)));
    norm = std::max(norm, f.norm());
  }
  report(9, idem <= kProjectorTol && null <= kProjectorTol && orth <= kProjectorTol && norm <= 1.0 + 1e-15,
         fmt("%d inputs: |P^2-P| %.1e, |P q2| %.1e, |f.q2| %.1e (<= %.0e), max |f| %.17g", evaluated, idem, null,
             orth, kProjectorTol, norm),
         elapsed(t0));
}

}  // namespace

int main() {
  try {
    criterion1();
    criterion2();
    const Medians ins = criterion3();
    criterion4(ins);
    criterion5();
    criterion6();
    criterion7();
    criterion8(ins);
    criterion9();
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
