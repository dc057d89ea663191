#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "trnav/error.hpp"
#include "trnav/flow.hpp"
#include "trnav/image.hpp"
#include "test_support.hpp"

using namespace trnav;
using test::WaveTexture;

namespace {

GrayImage random_image(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  GrayImage img(w, h);
  for (float& p : img.pixels()) p = u(rng);
  return img;
}

GrayImage checkerboard(int w, int h, int cell) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(x, y) = ((x / cell + y / cell) % 2) ? 1.0f : 0.0f;
  return img;
}

// Interior grid that keeps every pyramid level's window inside the image.
std::vector<Vec2> interior_points(int w, int h, int n, double margin) {
  return seed_regular_grid(w, h, n, margin);
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::Domain;
}

}  // namespace

TEST_CASE("KernelWindow weights are normalized") {
  for (const KernelWindow& w : {KernelWindow::gaussian(7, 3.5), KernelWindow::binary(3),
                                KernelWindow::gaussian(1, 0.5), default_window()}) {
    double sum = 0.0;
    for (double v : w.weights()) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    CHECK(w.weights().size() == static_cast<std::size_t>(w.side() * w.side()));
  }
  CHECK(default_window().radius() == 7);
  CHECK(default_window().sigma() == 3.5);
  CHECK_THROWS_AS(KernelWindow::binary(0), Error);
  CHECK_THROWS_AS(KernelWindow::gaussian(3, 0.0), Error);
}

TEST_CASE("structure_tensor: constant image gives the zero matrix") {
  const GrayImage img(40, 40, 0.5f);
  CHECK(structure_tensor(img, {20, 20}, default_window()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("structure_tensor: vertical step edge has one dominant direction") {
  GrayImage img(40, 40, 0.0f);
  for (int y = 0; y < 40; ++y)
    for (int x = 20; x < 40; ++x) img.at(x, y) = 1.0f;
  const Mat2 m = structure_tensor(img, {20, 20}, default_window());
  CHECK(m(0, 0) > 0.0);
  CHECK(m(0, 1) == 0.0);
  CHECK(m(1, 1) == 0.0);
  CHECK(shi_tomasi_score(m) == 0.0);
}

TEST_CASE("structure_tensor: window overrun is a domain error") {
  const GrayImage img = random_image(30, 30, 1);
  CHECK(kind_of([&] { structure_tensor(img, {7, 15}, default_window()); }) == ErrorKind::Domain);
  CHECK_NOTHROW(structure_tensor(img, {8, 8}, default_window()));
}

TEST_CASE("structure_tensor and LK right-hand side match the naive double loop") {
  const KernelWindow windows[] = {default_window(), KernelWindow::binary(4), KernelWindow::gaussian(2, 1.0)};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> pos(20.0, 80.0), g(-3.0, 3.0);
  for (int trial = 0; trial < 30; ++trial) {
    const GrayImage a = random_image(100, 100, 10 + trial);
    const GrayImage b = random_image(100, 100, 100 + trial);
    const KernelWindow& w = windows[trial % 3];
    // Integral and sub-pixel centres exercise both code paths.
    const Vec2 c = trial % 2 ? Vec2(std::round(pos(rng)), std::round(pos(rng))) : Vec2(pos(rng), pos(rng));
    const Mat2 fast = structure_tensor(a, c, w);
    const Mat2 slow = reference::structure_tensor(a, c, w);
    CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(fast(0, 1) == fast(1, 0));

    const Vec2 guess(g(rng), g(rng));
    const Vec2 rhs = reference::lk_rhs(a, b, c, guess, w);
    const Vec2 d = lk_step(a, b, c, guess, w);
    // lk_step returns M^-1 * rhs; compare its rhs through M.
    CHECK((slow * d - rhs).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("corner_score_map matches the reference map") {
  const GrayImage img = random_image(64, 48, 3);
  const auto fast = corner_score_map(img, default_window());
  const auto slow = reference::corner_score_map(img, default_window());
  REQUIRE(fast.size() == slow.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  CHECK(worst <= 1e-12);
}

TEST_CASE("shi_tomasi_score: closed form") {
  Mat2 m;
  m << 4, 0, 0, 9;
  CHECK(shi_tomasi_score(m) == 4.0);
  CHECK(shi_tomasi_score(Mat2::Zero()) == 0.0);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    Eigen::Matrix<double, 2, 3> a;
    for (int k = 0; k < 6; ++k) a.data()[k] = n(rng);
    const Mat2 psd = a * a.transpose();
    const double ref = Eigen::SelfAdjointEigenSolver<Mat2>(psd).eigenvalues().minCoeff();
    CHECK(std::abs(shi_tomasi_score(psd) - std::max(ref, 0.0)) <= 1e-10);
    // Characteristic polynomial root.
    const double tr = psd.trace(), det = psd.determinant();
    const double root = 0.5 * (tr - std::sqrt(std::max(tr * tr - 4 * det, 0.0)));
    CHECK(std::abs(shi_tomasi_score(psd) - root) <= 1e-10);
  }
}

TEST_CASE("detect_corners: constant image has none") {
  CHECK(detect_corners(GrayImage(60, 60, 0.3f), default_window(), {}).empty());
}

TEST_CASE("detect_corners: checkerboard corners, sorted and spaced") {
  const int cell = 20;
  const GrayImage img = checkerboard(200, 160, cell);
  CornerOptions opt;
  opt.min_spacing = 10.0;
  opt.max_count = 100;
  opt.min_score = 1e-4;
  const KernelWindow w = KernelWindow::gaussian(3, 1.5);
  const auto corners = detect_corners(img, w, opt);
  REQUIRE(!corners.empty());
  const auto scores = corner_score_map(img, w);
  double prev = INFINITY;
  for (std::size_t i = 0; i < corners.size(); ++i) {
    const Vec2& c = corners[i];
    // The nearest lattice corner sits between pixels (cell*k - 0.5).
    const double ex = std::round((c.x() + 0.5) / cell) * cell - 0.5;
    const double ey = std::round((c.y() + 0.5) / cell) * cell - 0.5;
    CHECK(std::abs(c.x() - ex) <= 1.0);
    CHECK(std::abs(c.y() - ey) <= 1.0);
    const double s = scores[static_cast<std::size_t>(c.y()) * img.width() + static_cast<std::size_t>(c.x())];
    CHECK(s <= prev);
    prev = s;
    for (std::size_t j = 0; j < i; ++j) CHECK((corners[j] - c).norm() >= opt.min_spacing);
  }
  opt.max_count = 5;
  CHECK(detect_corners(img, w, opt).size() == 5);
}

TEST_CASE("seed_regular_grid") {
  const auto g = seed_regular_grid(4800, 2923, 17, 0.0);
  CHECK(g.size() == 289);
  const auto four = seed_regular_grid(4800, 2923, 2, 0.0);
  REQUIRE(four.size() == 4);
  CHECK(four[0] == Vec2(0, 0));
  CHECK(four[1] == Vec2(4800, 0));
  CHECK(four[2] == Vec2(0, 2923));
  CHECK(four[3] == Vec2(4800, 2923));
  const auto m = seed_regular_grid(640, 480, 9, 40.0);
  const double sx = (640 - 80) / 8.0, sy = (480 - 80) / 8.0;
  for (int j = 0; j < 9; ++j)
    for (int i = 0; i < 9; ++i) {
      const Vec2& p = m[static_cast<std::size_t>(j * 9 + i)];
      CHECK(std::abs(p.x() - (40 + i * sx)) < 1e-9);
      CHECK(std::abs(p.y() - (40 + j * sy)) < 1e-9);
      CHECK(p.x() >= 40.0);
      CHECK(p.x() <= 600.0);
    }
  CHECK_THROWS_AS(seed_regular_grid(100, 100, 1, 0), Error);
  CHECK_THROWS_AS(seed_regular_grid(100, 100, 5, 50), Error);
}

TEST_CASE("lk_step: zero motion gives zero flow") {
  const WaveTexture tex(5);
  const GrayImage a = tex.render(80, 80);
  const Vec2 d = lk_step(a, a, {40, 40}, Vec2::Zero(), default_window());
  CHECK(d.norm() <= 1e-6);
}

TEST_CASE("lk_step: iterated single level recovers a (1.5, 0.5) shift") {
  const WaveTexture tex(6);
  const GrayImage a = tex.render(100, 100);
  const GrayImage b = tex.render(100, 100, 1.5, 0.5);
  Vec2 g = Vec2::Zero();
  for (int it = 0; it < 30; ++it) {
    const Vec2 d = lk_step(a, b, {50, 50}, g, default_window());
    g += d;
    if (d.norm() < 1e-4) break;
  }
  CHECK(std::abs(g.x() - 1.5) <= 0.25);
  CHECK(std::abs(g.y() - 0.5) <= 0.25);
}

TEST_CASE("lk_step: failure modes") {
  const GrayImage flat(60, 60, 0.5f);
  CHECK(kind_of([&] { lk_step(flat, flat, {30, 30}, Vec2::Zero(), default_window()); }) ==
        ErrorKind::Untrackable);
  const GrayImage tex = WaveTexture(7).render(60, 60);
  CHECK(kind_of([&] { lk_step(tex, tex, {30, 30}, Vec2(25, 0), default_window()); }) ==
        ErrorKind::LostFeature);
  CHECK(kind_of([&] { lk_step(tex, tex, {3, 30}, Vec2::Zero(), default_window()); }) ==
        ErrorKind::LostFeature);
}

TEST_CASE("track_pyramidal: identical images give zero flow") {
  // Every window must fit on every level of the four-level pyramid.
  const GrayImage a = WaveTexture(8).render(256, 256);
  const auto pts = interior_points(256, 256, 5, 72.0);
  const auto f = track_pyramidal(a, a, pts, TrackerConfig{});
  for (const FlowFeature& x : f) {
    CHECK(x.tracked());
    CHECK(x.flow().norm() <= 1e-6);
  }
}

TEST_CASE("track_pyramidal: global (12, -7) shift with four levels") {
  const WaveTexture tex(9);
  const GrayImage a = tex.render(320, 320);
  const GrayImage b = tex.render(320, 320, 12.0, -7.0);
  const auto pts = interior_points(320, 320, 6, 90.0);
  const auto f = track_pyramidal(a, b, pts, TrackerConfig{});
  double sum = 0.0, worst = 0.0;
  int n = 0;
  for (const FlowFeature& x : f) {
    REQUIRE(x.tracked());
    const double e = (x.flow() - Vec2(12.0, -7.0)).norm();
    sum += e;
    worst = std::max(worst, e);
    ++n;
    CHECK(x.u2.x() >= 0);
    CHECK(x.u2.x() <= 319);
  }
  CHECK(sum / n <= 0.25);
  CHECK(worst <= 0.5);
}

TEST_CASE("track_pyramidal: lost features and size mismatch") {
  const WaveTexture tex(10);
  const GrayImage a = tex.render(200, 200);
  const GrayImage b = tex.render(200, 200, 3.0, 0.0);
  // A point at the border cannot host a window.
  const auto f = track_pyramidal(a, b, {Vec2(2, 2), Vec2(100, 100)}, TrackerConfig{});
  CHECK_FALSE(f[0].tracked());
  CHECK(f[1].tracked());
  const GrayImage c = tex.render(201, 200);
  CHECK(kind_of([&] { track_pyramidal(a, c, {Vec2(100, 100)}, TrackerConfig{}); }) == ErrorKind::Domain);

  TrackerConfig tight;
  tight.max_flow = 1.0;
  CHECK_FALSE(track_pyramidal(a, b, {Vec2(100, 100)}, tight)[0].tracked());
}

TEST_CASE("track_pyramidal is deterministic and equals the serial reference") {
  const WaveTexture tex(11);
  const GrayImage a = tex.render(256, 256);
  const GrayImage b = tex.render(256, 256, -4.3, 2.7);
  const auto pts = interior_points(256, 256, 12, 40.0);
  const auto f1 = track_pyramidal(a, b, pts, TrackerConfig{});
  const auto f2 = track_pyramidal(a, b, pts, TrackerConfig{});
  const auto r = reference::track_pyramidal(a, b, pts, TrackerConfig{});
  REQUIRE(f1.size() == r.size());
  for (std::size_t i = 0; i < f1.size(); ++i) {
    CHECK(f1[i].u2 == f2[i].u2);
    CHECK(f1[i].u2 == r[i].u2);
    CHECK(f1[i].status == r[i].status);
  }
}

TEST_CASE("chain_tracks: two frames equal track_pyramidal") {
  const WaveTexture tex(12);
  const std::vector<GrayImage> frames = {tex.render(200, 200), tex.render(200, 200, 2.0, 1.0)};
  const auto pts = interior_points(200, 200, 4, 70.0);
  const auto a = chain_tracks(frames, pts, TrackerConfig{});
  const auto b = track_pyramidal(frames[0], frames[1], pts, TrackerConfig{});
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].u2 == b[i].u2);
    CHECK(a[i].status == b[i].status);
  }
}

TEST_CASE("chain_tracks: ten frames stepping (2, 0) accumulate (18, 0)") {
  const WaveTexture tex(13);
  std::vector<GrayImage> frames;
  for (int k = 0; k < 10; ++k) frames.push_back(tex.render(240, 200, 2.0 * k, 0.0));
  const auto pts = interior_points(240, 200, 4, 70.0);
  TrackerConfig cfg;
  cfg.levels = 3;
  const auto f = chain_tracks(frames, pts, cfg);
  for (const FlowFeature& x : f) {
    REQUIRE(x.tracked());
    CHECK(std::abs(x.flow().x() - 18.0) <= 0.5);
    CHECK(std::abs(x.flow().y()) <= 0.5);
  }
}

TEST_CASE("chain_tracks: a feature lost at an intermediate hop stays lost") {
  const WaveTexture tex(14);
  std::vector<GrayImage> frames;
  // The scene jumps by 12 px at the second hop. On the coarsest level
  // (25 px wide) that carries the window of the point at x = 124 over the
  // border, while the point at x = 80 stays inside.
  for (int k = 0; k < 4; ++k) frames.push_back(tex.render(200, 200, k >= 2 ? 12.0 : 0.0, 0.0));
  const auto first = track_pyramidal(frames[0], frames[1], {Vec2(124, 100)}, TrackerConfig{});
  REQUIRE(first[0].tracked());  // the first hop alone is fine
  const auto f = chain_tracks(frames, {Vec2(80, 100), Vec2(124, 100)}, TrackerConfig{});
  REQUIRE(f[0].tracked());
  CHECK((f[0].flow() - Vec2(12, 0)).norm() <= 0.5);
  CHECK_FALSE(f[1].tracked());
  CHECK(f[1].u1 == Vec2(124, 100));
}

TEST_CASE("pyramid downsample preserves the mean intensity") {
  const GrayImage img = WaveTexture(15).render(257, 193);
  const auto pyr = build_pyramid(img, 4);
  REQUIRE(pyr.size() == 4);
  auto mean = [](const GrayImage& g) {
    double s = 0.0;
    for (float p : g.pixels()) s += p;
    return s / static_cast<double>(g.pixels().size());
  };
  for (std::size_t l = 1; l < pyr.size(); ++l) {
    CHECK(pyr[l].width() == (pyr[l - 1].width() + 1) / 2);
    CHECK(std::abs(mean(pyr[l]) - mean(pyr[l - 1])) <= 1e-3);
  }
}

TEST_CASE("PGM round trip, 8 and 16 bit") {
  test::TempDir tmp("pgm");
  const GrayImage img = random_image(33, 17, 16);
  save_pgm(img, tmp.file("a16.pgm"), true);
  save_pgm(img, tmp.file("a8.pgm"), false);
  const GrayImage b = load_pgm(tmp.file("a16.pgm"));
  const GrayImage c = load_pgm(tmp.file("a8.pgm"));
  REQUIRE(b.width() == 33);
  REQUIRE(b.height() == 17);
  for (std::size_t i = 0; i < img.pixels().size(); ++i) {
    CHECK(std::abs(b.pixels()[i] - img.pixels()[i]) <= 0.5 / 65535 + 1e-7);
    CHECK(std::abs(c.pixels()[i] - img.pixels()[i]) <= 0.5 / 255 + 1e-7);
  }
  CHECK_THROWS_AS(load_pgm(tmp.file("missing.pgm")), Error);
  test::TempDir t2("pgmbad");
  {
    std::ofstream o(t2.file("bad.pgm"), std::ios::binary);
    o << "P2\n2 2\n255\n0 0 0 0\n";
  }
  CHECK(kind_of([&] { load_pgm(t2.file("bad.pgm")); }) == ErrorKind::Load);
  {
    std::ofstream o(t2.file("short.pgm"), std::ios::binary);
    o << "P5\n4 4\n255\n" << std::string(5, 'a');
  }
  CHECK(kind_of([&] { load_pgm(t2.file("short.pgm")); }) == ErrorKind::Load);
}

TEST_CASE("flow CSV round trip and parse errors") {
  std::vector<FlowFeature> f(3);
  for (int i = 0; i < 3; ++i) {
    f[static_cast<std::size_t>(i)].id = i * 7;
    f[static_cast<std::size_t>(i)].u1 = Vec2(1.2345678 * i, 100.5);
    f[static_cast<std::size_t>(i)].u2 = Vec2(3.0, 4.0000004 + i);
    f[static_cast<std::size_t>(i)].status = i == 1 ? TrackStatus::Lost : TrackStatus::Tracked;
    f[static_cast<std::size_t>(i)].score = 0.25 * i;
  }
  std::stringstream ss;
  write_flow_csv(f, ss);
  CHECK(ss.str().rfind("id,u1x,u1y,u2x,u2y,status,score\n", 0) == 0);
  const auto g = read_flow_csv(ss);
  REQUIRE(g.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g[i].id == f[i].id);
    CHECK((g[i].u1 - f[i].u1).cwiseAbs().maxCoeff() <= 5e-7);
    CHECK((g[i].u2 - f[i].u2).cwiseAbs().maxCoeff() <= 5e-7);
    CHECK(g[i].status == f[i].status);
  }
  const char* bad[] = {"", "id,u1x\n", "id,u1x,u1y,u2x,u2y,status,score\n1,2,3,4,5,tracked\n",
                       "id,u1x,u1y,u2x,u2y,status,score\n1,2,x,4,5,tracked,0\n",
                       "id,u1x,u1y,u2x,u2y,status,score\n1,2,3,4,5,maybe,0\n"};
  for (const char* text : bad) {
    std::istringstream in(text);
    CHECK(kind_of([&] { read_flow_csv(in, "f.csv"); }) == ErrorKind::Load);
  }
  std::istringstream in("id,u1x,u1y,u2x,u2y,status,score\n1,2,3,4,5,tracked,0\n2,2,oops,4,5,tracked,0\n");
  try {
    read_flow_csv(in, "f.csv");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("f.csv:3") != std::string::npos);
  }
}
