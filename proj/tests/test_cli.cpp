#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "trnav/estimator.hpp"
#include "trnav/image.hpp"
#include "trnav/io.hpp"
#include "trnav/sim.hpp"
#include "trnav/terrain.hpp"
#include "test_support.hpp"

using namespace trnav;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  args.insert(args.begin(), "trnav");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string scenario_path() {
  return (std::filesystem::path(TRNAV_SOURCE_DIR) / "scenarios" / "xiaoshan-like.json").string();
}

// Scenario variant with noiseless flow written into `dir`.
std::string noiseless_scenario(const test::TempDir& dir, double duration = 19.6) {
  ScenarioConfig c = load_scenario(scenario_path());
  c.flow_noise_px = 0.0;
  c.duration = duration;
  const std::string p = dir.file("noiseless.json");
  write_text_file(p, scenario_to_json(c));
  return p;
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char ch : text) n += ch == '\n';
  return n;
}

void write_shifted_pair(const test::TempDir& dir, double dx, double dy) {
  const test::WaveTexture tex(5);
  save_pgm(tex.render(160, 120, 0.0, 0.0), dir.file("a.pgm"));
  save_pgm(tex.render(160, 120, dx, dy), dir.file("b.pgm"));
}

}  // namespace

TEST_CASE("cli: usage errors exit 2, help exits 0") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"fly"}).code == cli::kExitUsage);
  CHECK(run({"generate-terrain"}).code == cli::kExitUsage);  // --output missing
  CHECK(run({"estimate", "only-one.csv"}).code == cli::kExitUsage);
  CHECK(run({"track", "one.pgm"}).code == cli::kExitUsage);
  CHECK(run({"--seed", "abc", "generate-terrain", "-o", "x.asc"}).code == cli::kExitUsage);
  CHECK(run({"generate-terrain", "--kind", "mountains", "-o", "x.asc"}).code == cli::kExitUsage);
  CHECK(run({"simulate", "s.json", "-o", "x", "--monte-carlo", "2", "--export-epoch", "1"}).code ==
        cli::kExitUsage);
  const Outcome h = run({"--help"});
  CHECK(h.code == cli::kExitOk);
  for (const char* sub : {"generate-terrain", "track", "estimate", "simulate", "plot-data"})
    CHECK(h.out.find(sub) != std::string::npos);
}

TEST_CASE("cli: domain errors exit 1 with a message") {
  const test::TempDir dir("cli-domain");
  const Outcome o = run({"simulate", dir.file("missing.json"), "-o", dir.file("x")});
  CHECK(o.code == cli::kExitDomain);
  CHECK(o.err.find("error:") != std::string::npos);
  write_text_file(dir.file("bad.csv"), "a,b\n1,2\n");
  CHECK(run({"plot-data", dir.file("bad.csv"), "-o", dir.file("p")}).code == cli::kExitDomain);
}

TEST_CASE("cli generate-terrain: flat grid, reload and seed determinism") {
  const test::TempDir dir("cli-gen");
  const Outcome flat = run({"generate-terrain", "--kind", "flat", "--base", "42", "--width", "17", "--height", "9",
                            "-o", dir.file("flat.asc")});
  REQUIRE(flat.code == 0);
  const Dtm d = load_esri_ascii(dir.file("flat.asc"));
  CHECK(d.width() == 17);
  CHECK(d.height() == 9);
  for (double v : d.elevations()) CHECK(v == 42.0);

  for (const char* name : {"f1.asc", "f2.asc"})
    REQUIRE(run({"--seed", "11", "generate-terrain", "--width", "65", "--height", "65", "-o", dir.file(name)}).code ==
            0);
  CHECK(read_text_file(dir.file("f1.asc")) == read_text_file(dir.file("f2.asc")));
  REQUIRE(run({"--seed", "12", "generate-terrain", "--width", "65", "--height", "65", "-o", dir.file("f3.asc")}).code ==
          0);
  CHECK(read_text_file(dir.file("f1.asc")) != read_text_file(dir.file("f3.asc")));
  const Dtm f = load_esri_ascii(dir.file("f1.asc"));
  CHECK(f.width() == 65);
}

TEST_CASE("cli track: identical and shifted frames") {
  const test::TempDir dir("cli-track");
  write_shifted_pair(dir, 0.0, 0.0);
  REQUIRE(run({"track", dir.file("a.pgm"), dir.file("b.pgm"), "--grid-side", "4", "--levels", "2", "-o", dir.file("z.csv")}).code == 0);
  for (const FlowFeature& f : load_flow_csv(dir.file("z.csv"))) {
    CHECK(f.status == TrackStatus::Tracked);
    CHECK((f.u2 - f.u1).norm() <= 1e-6);
  }

  write_shifted_pair(dir, 3.0, -2.0);
  const Outcome o = run({"track", dir.file("a.pgm"), dir.file("b.pgm"), "--grid-side", "4", "--levels", "2", "-o", dir.file("s.csv")});
  REQUIRE(o.code == 0);
  CHECK(o.out.find("tracked 16") != std::string::npos);
  // PGM quantisation bounds the achievable accuracy.
  for (const FlowFeature& f : load_flow_csv(dir.file("s.csv"))) {
    REQUIRE(f.status == TrackStatus::Tracked);
    CHECK(((f.u2 - f.u1) - Vec2(3.0, -2.0)).norm() <= 0.25);
  }

  // Without --output the CSV goes to stdout.
  const Outcome s = run({"track", dir.file("a.pgm"), dir.file("b.pgm"), "--grid-side", "4", "--levels", "2"});
  CHECK(s.code == 0);
  CHECK(count_lines(s.out) == 17);
}

TEST_CASE("cli track: three frames are chained, mismatched sizes fail") {
  const test::TempDir dir("cli-chain");
  const test::WaveTexture tex(9);
  for (int k = 0; k < 3; ++k)
    save_pgm(tex.render(160, 120, 2.0 * k, 1.0 * k), dir.file("f" + std::to_string(k) + ".pgm"));
  REQUIRE(run({"track", dir.file("f0.pgm"), dir.file("f1.pgm"), dir.file("f2.pgm"), "--grid-side", "3", "--levels", "2", "-o",
               dir.file("c.csv")})
              .code == 0);
  for (const FlowFeature& f : load_flow_csv(dir.file("c.csv"))) {
    REQUIRE(f.status == TrackStatus::Tracked);
    CHECK(((f.u2 - f.u1) - Vec2(4.0, 2.0)).norm() <= 0.5);
  }
  save_pgm(tex.render(100, 120, 0, 0), dir.file("small.pgm"));
  CHECK(run({"track", dir.file("f0.pgm"), dir.file("small.pgm")}).code == cli::kExitDomain);
}

TEST_CASE("cli simulate + estimate: exported epoch is recovered") {
  const test::TempDir dir("cli-est");
  const std::string scen = noiseless_scenario(dir);
  const std::string prefix = dir.file("run");
  REQUIRE(run({"simulate", scen, "--export-epoch", "2", "--export-offset-m", "100", "--export-offset-deg", "2", "-o",
               prefix})
              .code == 0);
  const std::string flow = prefix + "_epoch2_flow.csv";
  const std::string dtm = prefix + "_epoch2_dtm.asc";
  const std::string prob = prefix + "_epoch2_problem.json";
  const Outcome e1 = run({"estimate", flow, dtm, prob, "-o", dir.file("est1.json")});
  REQUIRE(e1.code == 0);
  const Outcome e2 = run({"estimate", flow, dtm, prob, "-o", dir.file("est2.json")});
  REQUIRE(e2.code == 0);
  CHECK(read_text_file(dir.file("est1.json")) == read_text_file(dir.file("est2.json")));

  const auto j = nlohmann::json::parse(read_text_file(dir.file("est1.json")));
  CHECK(j.at("converged").get<bool>());
  const ProblemSidecar side = load_problem_json(prob);
  REQUIRE(side.truth.has_value());
  const ProblemSidecar est = parse_problem_json(
      nlohmann::json{{"intrinsics", nlohmann::json::parse(read_text_file(prob)).at("intrinsics")},
                     {"initial_guess", j.at("theta")}}
          .dump());
  const test::ThetaError err = test::theta_error(est.initial_guess, *side.truth);
  CHECK(err.position <= 0.1);
  CHECK(err.angle_deg <= 0.01);

  // Keep five features only: the estimator refuses.
  auto feats = load_flow_csv(flow);
  feats.resize(5);
  save_flow_csv(feats, dir.file("five.csv"));
  const Outcome few = run({"estimate", dir.file("five.csv"), dtm, prob});
  CHECK(few.code == cli::kExitDomain);
  CHECK(few.err.find("need 6") != std::string::npos);
}

TEST_CASE("cli simulate: single run outputs and plot-data") {
  const test::TempDir dir("cli-sim");
  const std::string scen = noiseless_scenario(dir);
  const std::string prefix = dir.file("run");
  const Outcome o = run({"simulate", scen, "-o", prefix});
  REQUIRE(o.code == 0);
  const std::string tracks = read_text_file(prefix + "_tracks.csv");
  CHECK(count_lines(tracks) == 51);
  const std::string report = read_text_file(prefix + "_report.csv");
  CHECK(count_lines(report) == 6);
  const auto summary = nlohmann::json::parse(read_text_file(prefix + "_summary.json"));
  CHECK(summary.dump().find("max_position") != std::string::npos);
  const RunReport rr = [&] {
    std::ifstream in(prefix + "_report.csv");
    RunReport r;
    r.epochs = read_report_csv(in);
    r.vision_summary = summarize(r.epochs, true);
    return r;
  }();
  CHECK(rr.vision_summary.max_position <= 0.1);

  const Outcome p = run({"plot-data", prefix + "_report.csv", "-o", dir.file("plot")});
  REQUIRE(p.code == 0);
  const std::string traj = read_text_file(dir.file("plot") + "_trajectory.tsv");
  const std::string errs = read_text_file(dir.file("plot") + "_errors.tsv");
  CHECK(count_lines(traj) == 6);
  CHECK(count_lines(errs) == 6);
  CHECK(traj.rfind("epoch\tt\ttrue_x\ttrue_y\ttrue_z\tprop_x", 0) == 0);
  CHECK(errs.rfind("epoch\tt\tvis_err_x", 0) == 0);
}

TEST_CASE("cli simulate: Monte Carlo aggregate and seed override") {
  const test::TempDir dir("cli-mc");
  const std::string scen = noiseless_scenario(dir, 8.0);
  const std::string prefix = dir.file("mc");
  const Outcome o = run({"--seed", "5", "simulate", scen, "--monte-carlo", "3", "-o", prefix});
  REQUIRE(o.code == 0);
  const auto j = nlohmann::json::parse(read_text_file(prefix + "_montecarlo.json"));
  CHECK(j.at("runs").get<int>() == 3);
  for (int s : {5, 6, 7}) CHECK(std::filesystem::exists(prefix + "_seed" + std::to_string(s) + "_report.csv"));
  CHECK_FALSE(std::filesystem::exists(prefix + "_seed8_report.csv"));
}
