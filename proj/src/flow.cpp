#include "trnav/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <omp.h>

#include "trnav/error.hpp"

namespace trnav {

KernelWindow::KernelWindow(int radius, Kind kind, double sigma)
    : radius_(radius), kind_(kind), sigma_(sigma) {
  if (radius < 1) throw Error(ErrorKind::Config, "window radius must be >= 1");
  if (kind == Kind::Gaussian && !(sigma > 0.0)) {
    throw Error(ErrorKind::Config, "gaussian window sigma must be > 0");
  }
  const int n = side();
  // Separable: the 2D window is the outer product of one normalized 1D profile.
  std::vector<double> profile(static_cast<std::size_t>(n));
  for (int k = -radius; k <= radius; ++k) {
    profile[static_cast<std::size_t>(k + radius)] =
        kind == Kind::Gaussian ? std::exp(-0.5 * k * k / (sigma * sigma)) : 1.0;
  }
  const double sum = std::accumulate(profile.begin(), profile.end(), 0.0);
  for (double& p : profile) p /= sum;
  weights_.resize(static_cast<std::size_t>(n) * n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      weights_[static_cast<std::size_t>(y) * n + x] = profile[y] * profile[x];
}

KernelWindow KernelWindow::gaussian(int radius, double sigma) {
  return KernelWindow(radius, Kind::Gaussian, sigma);
}

KernelWindow KernelWindow::binary(int radius) { return KernelWindow(radius, Kind::Binary, 0.0); }

KernelWindow default_window() { return KernelWindow::gaussian(7, 3.5); }

namespace {

// Windowed template of the first image around one feature: intensities and
// central-difference gradients at every window sample, plus the matrix M.
struct LkTemplate {
  std::vector<double> i1;
  std::vector<double> gx;
  std::vector<double> gy;
  Mat2 m = Mat2::Zero();
};

bool is_integral(const Vec2& p) { return p.x() == std::floor(p.x()) && p.y() == std::floor(p.y()); }

LkTemplate make_template(const GrayImage& img, const Vec2& c, const KernelWindow& win) {
  if (!img.window_fits(c.x(), c.y(), win.radius())) {
    throw Error(ErrorKind::LostFeature, "window overruns the image border");
  }
  const int r = win.radius();
  const std::size_t n = static_cast<std::size_t>(win.side()) * win.side();
  LkTemplate t;
  t.i1.resize(n);
  t.gx.resize(n);
  t.gy.resize(n);
  std::size_t k = 0;
  if (is_integral(c)) {
    const int cx = static_cast<int>(c.x());
    const int cy = static_cast<int>(c.y());
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx, ++k) {
        const int x = cx + dx;
        const int y = cy + dy;
        t.i1[k] = img.at(x, y);
        t.gx[k] = 0.5 * (static_cast<double>(img.at(x + 1, y)) - img.at(x - 1, y));
        t.gy[k] = 0.5 * (static_cast<double>(img.at(x, y + 1)) - img.at(x, y - 1));
      }
    }
  } else {
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx, ++k) {
        const double x = c.x() + dx;
        const double y = c.y() + dy;
        t.i1[k] = img.sample(x, y);
        t.gx[k] = 0.5 * (img.sample(x + 1, y) - img.sample(x - 1, y));
        t.gy[k] = 0.5 * (img.sample(x, y + 1) - img.sample(x, y - 1));
      }
    }
  }
  const std::vector<double>& w = win.weights();
  double a = 0.0, b = 0.0, d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    a += w[i] * t.gx[i] * t.gx[i];
    b += w[i] * t.gx[i] * t.gy[i];
    d += w[i] * t.gy[i] * t.gy[i];
  }
  t.m << a, b, b, d;
  return t;
}

Vec2 template_rhs(const LkTemplate& t, const GrayImage& img2, const Vec2& u1, const Vec2& guess,
                  const KernelWindow& win) {
  const Vec2 c2 = u1 + guess;
  if (!img2.window_fits(c2.x(), c2.y(), win.radius())) {
    throw Error(ErrorKind::LostFeature, "window left the second image");
  }
  const int r = win.radius();
  const std::vector<double>& w = win.weights();
  double bx = 0.0, by = 0.0;
  std::size_t k = 0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx, ++k) {
      const double it = img2.sample(c2.x() + dx, c2.y() + dy) - t.i1[k];
      bx -= w[k] * t.gx[k] * it;
      by -= w[k] * t.gy[k] * it;
    }
  }
  return {bx, by};
}

Vec2 solve_increment(const Mat2& m, const Vec2& rhs) {
  const double tr = m.trace();
  if (!(tr > 0.0) || shi_tomasi_score(m) < 1e-6 * tr) {
    throw Error(ErrorKind::Untrackable, "structure tensor is (near) singular");
  }
  const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return {(m(1, 1) * rhs.x() - m(0, 1) * rhs.y()) / det,
          (m(0, 0) * rhs.y() - m(1, 0) * rhs.x()) / det};
}

FlowFeature track_one(const std::vector<GrayImage>& pyr1, const std::vector<GrayImage>& pyr2,
                      const Vec2& u1, int id, const TrackerConfig& cfg) {
  FlowFeature f;
  f.id = id;
  f.u1 = u1;
  f.u2 = u1;
  f.status = TrackStatus::Lost;
  const GrayImage& base = pyr1.front();
  if (base.window_fits(u1.x(), u1.y(), cfg.window.radius())) {
    f.score = shi_tomasi_score(structure_tensor(base, u1, cfg.window));
  }
  const int levels = static_cast<int>(pyr1.size());
  Vec2 g = Vec2::Zero();
  try {
    for (int l = levels - 1; l >= 0; --l) {
      const double scale = std::ldexp(1.0, -l);
      const Vec2 ul = u1 * scale;
      const LkTemplate t = make_template(pyr1[static_cast<std::size_t>(l)], ul, cfg.window);
      for (int it = 0; it < cfg.max_iters; ++it) {
        const Vec2 rhs = template_rhs(t, pyr2[static_cast<std::size_t>(l)], ul, g, cfg.window);
        const Vec2 d = solve_increment(t.m, rhs);
        if (!d.allFinite()) throw Error(ErrorKind::Untrackable, "non-finite flow increment");
        g += d;
        if (d.norm() < cfg.eps) break;
      }
      if (l > 0) g *= 2.0;
    }
  } catch (const Error&) {
    return f;
  }
  f.u2 = u1 + g;
  const bool inside = f.u2.x() >= 0.0 && f.u2.y() >= 0.0 && f.u2.x() <= base.width() - 1 &&
                      f.u2.y() <= base.height() - 1;
  if (inside && g.norm() <= cfg.max_flow) f.status = TrackStatus::Tracked;
  return f;
}

void check_pair(const GrayImage& a, const GrayImage& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorKind::Domain, "tracked images differ in size");
  }
}

}  // namespace

Mat2 structure_tensor(const GrayImage& img, const Vec2& center, const KernelWindow& window) {
  if (!img.window_fits(center.x(), center.y(), window.radius())) {
    throw Error(ErrorKind::Domain, "structure tensor window overruns the image border");
  }
  return make_template(img, center, window).m;
}

double shi_tomasi_score(const Mat2& m) {
  const double a = m(0, 0);
  const double c = m(1, 1);
  const double b = 0.5 * (m(0, 1) + m(1, 0));
  const double half_diff = 0.5 * (a - c);
  const double lambda_min = 0.5 * (a + c) - std::sqrt(half_diff * half_diff + b * b);
  return std::max(lambda_min, 0.0);
}

std::vector<double> corner_score_map(const GrayImage& img, const KernelWindow& window) {
  const int w = img.width();
  const int h = img.height();
  const int r = window.radius();
  std::vector<double> score(static_cast<std::size_t>(w) * h, 0.0);
  if (w < 2 * r + 3 || h < 2 * r + 3) return score;

  // Gradient products, then the separable window applied as two 1D passes.
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> xx(n, 0.0), xy(n, 0.0), yy(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double gx = 0.5 * (static_cast<double>(img.at(x + 1, y)) - img.at(x - 1, y));
      const double gy = 0.5 * (static_cast<double>(img.at(x, y + 1)) - img.at(x, y - 1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      xx[i] = gx * gx;
      xy[i] = gx * gy;
      yy[i] = gy * gy;
    }
  }
  std::vector<double> profile(static_cast<std::size_t>(window.side()));
  {
    // Recover the 1D profile from the center row: w(dx, 0) = p(dx) * p(0).
    const double p0 = std::sqrt(window.weight(0, 0));
    for (int k = -r; k <= r; ++k) profile[static_cast<std::size_t>(k + r)] = window.weight(k, 0) / p0;
  }
  std::vector<double> hxx(n, 0.0), hxy(n, 0.0), hyy(n, 0.0);
#pragma omp parallel for schedule(static)
  for (int y = 1; y < h - 1; ++y) {
    for (int x = r + 1; x < w - r - 1; ++x) {
      double a = 0.0, b = 0.0, c = 0.0;
      const std::size_t row = static_cast<std::size_t>(y) * w;
      for (int k = -r; k <= r; ++k) {
        const double p = profile[static_cast<std::size_t>(k + r)];
        a += p * xx[row + x + k];
        b += p * xy[row + x + k];
        c += p * yy[row + x + k];
      }
      hxx[row + x] = a;
      hxy[row + x] = b;
      hyy[row + x] = c;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = r + 1; y < h - r - 1; ++y) {
    for (int x = r + 1; x < w - r - 1; ++x) {
      double a = 0.0, b = 0.0, c = 0.0;
      for (int k = -r; k <= r; ++k) {
        const double p = profile[static_cast<std::size_t>(k + r)];
        const std::size_t i = static_cast<std::size_t>(y + k) * w + x;
        a += p * hxx[i];
        b += p * hxy[i];
        c += p * hyy[i];
      }
      Mat2 m;
      m << a, b, b, c;
      score[static_cast<std::size_t>(y) * w + x] = shi_tomasi_score(m);
    }
  }
  return score;
}

std::vector<Vec2> detect_corners(const GrayImage& img, const KernelWindow& window,
                                 const CornerOptions& options) {
  const std::vector<double> score = corner_score_map(img, window);
  const int w = img.width();
  const int h = img.height();
  struct Candidate {
    double score;
    int x;
    int y;
  };
  std::vector<Candidate> cands;
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) {
      const double s = score[static_cast<std::size_t>(y) * w + x];
      if (!(s > options.min_score)) continue;
      // 3x3 local maximum; ties resolved towards the first in raster order.
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (!dx && !dy) continue;
          const double o = score[static_cast<std::size_t>(y + dy) * w + x + dx];
          if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) cands.push_back({s, x, y});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<Vec2> out;
  const double spacing2 = options.min_spacing * options.min_spacing;
  for (const Candidate& c : cands) {
    if (static_cast<int>(out.size()) >= options.max_count) break;
    const Vec2 p(c.x, c.y);
    bool ok = true;
    for (const Vec2& q : out) {
      if ((p - q).squaredNorm() < spacing2) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(p);
  }
  return out;
}

std::vector<Vec2> seed_regular_grid(int width, int height, int n_per_side, double margin) {
  if (n_per_side < 2) throw Error(ErrorKind::Config, "grid needs at least 2 points per side");
  if (!(margin >= 0.0) || !(width - 2.0 * margin > 0.0) || !(height - 2.0 * margin > 0.0)) {
    throw Error(ErrorKind::Config, "grid does not fit inside the margins");
  }
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(n_per_side) * n_per_side);
  const double sx = (width - 2.0 * margin) / (n_per_side - 1);
  const double sy = (height - 2.0 * margin) / (n_per_side - 1);
  for (int j = 0; j < n_per_side; ++j)
    for (int i = 0; i < n_per_side; ++i) pts.emplace_back(margin + i * sx, margin + j * sy);
  return pts;
}

Vec2 lk_step(const GrayImage& img1, const GrayImage& img2, const Vec2& u1, const Vec2& guess,
             const KernelWindow& window) {
  check_pair(img1, img2);
  const LkTemplate t = make_template(img1, u1, window);
  const Vec2 rhs = template_rhs(t, img2, u1, guess, window);
  return solve_increment(t.m, rhs);
}

std::vector<FlowFeature> track_pyramids(const std::vector<GrayImage>& pyr1,
                                        const std::vector<GrayImage>& pyr2,
                                        const std::vector<Vec2>& points,
                                        const TrackerConfig& config) {
  if (pyr1.empty() || pyr1.size() != pyr2.size()) {
    throw Error(ErrorKind::Config, "pyramids must be non-empty and of equal depth");
  }
  check_pair(pyr1.front(), pyr2.front());
  std::vector<FlowFeature> out(points.size());
  const int n = static_cast<int>(points.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (int i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = track_one(pyr1, pyr2, points[static_cast<std::size_t>(i)], i, config);
  }
  return out;
}

std::vector<FlowFeature> track_pyramidal(const GrayImage& img1, const GrayImage& img2,
                                         const std::vector<Vec2>& points,
                                         const TrackerConfig& config) {
  check_pair(img1, img2);
  if (config.levels < 1) throw Error(ErrorKind::Config, "tracker needs at least one level");
  return track_pyramids(build_pyramid(img1, config.levels), build_pyramid(img2, config.levels),
                        points, config);
}

std::vector<FlowFeature> chain_tracks(const std::vector<GrayImage>& frames,
                                      const std::vector<Vec2>& points,
                                      const TrackerConfig& config) {
  if (frames.size() < 2) throw Error(ErrorKind::Config, "chained tracking needs >= 2 frames");
  for (std::size_t k = 1; k < frames.size(); ++k) check_pair(frames[0], frames[k]);

  std::vector<GrayImage> curr = build_pyramid(frames[1], config.levels);
  std::vector<FlowFeature> result =
      track_pyramids(build_pyramid(frames[0], config.levels), curr, points, config);
  for (std::size_t k = 2; k < frames.size(); ++k) {
    std::vector<GrayImage> next = build_pyramid(frames[k], config.levels);
    std::vector<Vec2> alive;
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < result.size(); ++i) {
      if (result[i].tracked()) {
        alive.push_back(result[i].u2);
        index.push_back(i);
      }
    }
    const std::vector<FlowFeature> hop = track_pyramids(curr, next, alive, config);
    for (std::size_t a = 0; a < hop.size(); ++a) {
      FlowFeature& f = result[index[a]];
      if (hop[a].tracked() && (hop[a].u2 - f.u1).norm() <= config.max_flow) {
        f.u2 = hop[a].u2;
      } else {
        f.status = TrackStatus::Lost;
      }
    }
    curr = std::move(next);
  }
  return result;
}

namespace reference {

Mat2 structure_tensor(const GrayImage& img, const Vec2& center, const KernelWindow& window) {
  if (!img.window_fits(center.x(), center.y(), window.radius())) {
    throw Error(ErrorKind::Domain, "structure tensor window overruns the image border");
  }
  const int r = window.radius();
  double a = 0.0, b = 0.0, c = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double x = center.x() + dx;
      const double y = center.y() + dy;
      const double ix = 0.5 * (img.sample(x + 1, y) - img.sample(x - 1, y));
      const double iy = 0.5 * (img.sample(x, y + 1) - img.sample(x, y - 1));
      const double wt = window.weight(dx, dy);
      a += wt * ix * ix;
      b += wt * ix * iy;
      c += wt * iy * iy;
    }
  }
  Mat2 m;
  m << a, b, b, c;
  return m;
}

Vec2 lk_rhs(const GrayImage& img1, const GrayImage& img2, const Vec2& u1, const Vec2& guess,
            const KernelWindow& window) {
  const int r = window.radius();
  double bx = 0.0, by = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double x = u1.x() + dx;
      const double y = u1.y() + dy;
      const double ix = 0.5 * (img1.sample(x + 1, y) - img1.sample(x - 1, y));
      const double iy = 0.5 * (img1.sample(x, y + 1) - img1.sample(x, y - 1));
      const double it = img2.sample(x + guess.x(), y + guess.y()) - img1.sample(x, y);
      bx -= window.weight(dx, dy) * ix * it;
      by -= window.weight(dx, dy) * iy * it;
    }
  }
  return {bx, by};
}

std::vector<double> corner_score_map(const GrayImage& img, const KernelWindow& window) {
  const int w = img.width();
  const int h = img.height();
  const int r = window.radius();
  std::vector<double> score(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = r + 1; y < h - r - 1; ++y)
    for (int x = r + 1; x < w - r - 1; ++x)
      score[static_cast<std::size_t>(y) * w + x] =
          shi_tomasi_score(reference::structure_tensor(img, Vec2(x, y), window));
  return score;
}

std::vector<FlowFeature> track_pyramidal(const GrayImage& img1, const GrayImage& img2,
                                         const std::vector<Vec2>& points,
                                         const TrackerConfig& config) {
  check_pair(img1, img2);
  const std::vector<GrayImage> pyr1 = build_pyramid(img1, config.levels);
  const std::vector<GrayImage> pyr2 = build_pyramid(img2, config.levels);
  std::vector<FlowFeature> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out.push_back(track_one(pyr1, pyr2, points[i], static_cast<int>(i), config));
  }
  return out;
}

}  // namespace reference

}  // namespace trnav
