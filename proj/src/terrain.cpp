#include "trnav/terrain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "trnav/error.hpp"

namespace trnav {

namespace {

// Slack for hull tests so that points produced by arithmetic on the hull
// boundary are not rejected.
constexpr double kHullSlack = 1e-9;

struct PatchCoord {
  int i;
  int j;
  double fx;  // fractional position inside the patch, [0, 1]
  double fy;
};

PatchCoord locate(const Dtm& dtm, double x, double y) {
  const double gx = (x - dtm.origin_x()) / dtm.cell_size();
  const double gy = (y - dtm.origin_y()) / dtm.cell_size();
  int i = std::clamp(static_cast<int>(std::floor(gx)), 0, dtm.width() - 2);
  int j = std::clamp(static_cast<int>(std::floor(gy)), 0, dtm.height() - 2);
  return {i, j, std::clamp(gx - i, 0.0, 1.0), std::clamp(gy - j, 0.0, 1.0)};
}

double patch_height(const Dtm& dtm, const PatchCoord& c) {
  const double z00 = dtm.at(c.i, c.j);
  const double z10 = dtm.at(c.i + 1, c.j);
  const double z01 = dtm.at(c.i, c.j + 1);
  const double z11 = dtm.at(c.i + 1, c.j + 1);
  return z00 * (1 - c.fx) * (1 - c.fy) + z10 * c.fx * (1 - c.fy) + z01 * (1 - c.fx) * c.fy +
         z11 * c.fx * c.fy;
}

Vec3 patch_normal(const Dtm& dtm, const PatchCoord& c) {
  const double z00 = dtm.at(c.i, c.j);
  const double z10 = dtm.at(c.i + 1, c.j);
  const double z01 = dtm.at(c.i, c.j + 1);
  const double z11 = dtm.at(c.i + 1, c.j + 1);
  const double dzdx = ((z10 - z00) * (1 - c.fy) + (z11 - z01) * c.fy) / dtm.cell_size();
  const double dzdy = ((z01 - z00) * (1 - c.fx) + (z11 - z10) * c.fx) / dtm.cell_size();
  return Vec3(-dzdx, -dzdy, 1.0).normalized();
}

void require_inside(const Dtm& dtm, double x, double y) {
  const double slack = kHullSlack * dtm.cell_size();
  if (!(x >= dtm.origin_x() - slack && x <= dtm.max_x() + slack)) {
    std::ostringstream msg;
    msg << "x = " << x << " outside DTM hull [" << dtm.origin_x() << ", " << dtm.max_x() << "]";
    throw Error(ErrorKind::Domain, msg.str());
  }
  if (!(y >= dtm.origin_y() - slack && y <= dtm.max_y() + slack)) {
    std::ostringstream msg;
    msg << "y = " << y << " outside DTM hull [" << dtm.origin_y() << ", " << dtm.max_y() << "]";
    throw Error(ErrorKind::Domain, msg.str());
  }
}

}  // namespace

Dtm::Dtm(double origin_x, double origin_y, double cell_size, int width, int height,
         std::vector<double> elevations)
    : origin_x_(origin_x),
      origin_y_(origin_y),
      cell_size_(cell_size),
      width_(width),
      height_(height),
      elevations_(std::move(elevations)) {
  if (!(cell_size > 0.0) || !std::isfinite(cell_size)) {
    throw Error(ErrorKind::Config, "DTM cell_size must be positive and finite");
  }
  if (width < 2 || height < 2) {
    throw Error(ErrorKind::Config, "DTM needs at least 2x2 nodes");
  }
  if (elevations_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(ErrorKind::Config, "DTM elevation count does not match width*height");
  }
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y)) {
    throw Error(ErrorKind::Config, "DTM origin must be finite");
  }
  min_z_ = std::numeric_limits<double>::infinity();
  max_z_ = -std::numeric_limits<double>::infinity();
  for (double z : elevations_) {
    if (!std::isfinite(z)) throw Error(ErrorKind::Config, "DTM elevation is not finite");
    min_z_ = std::min(min_z_, z);
    max_z_ = std::max(max_z_, z);
  }
}

bool Dtm::contains(double x, double y) const noexcept {
  const double slack = kHullSlack * cell_size_;
  return x >= origin_x_ - slack && x <= max_x() + slack && y >= origin_y_ - slack &&
         y <= max_y() + slack;
}

double elevation(const Dtm& dtm, double x, double y) {
  require_inside(dtm, x, y);
  return patch_height(dtm, locate(dtm, x, y));
}

Vec3 surface_normal(const Dtm& dtm, double x, double y) {
  require_inside(dtm, x, y);
  return patch_normal(dtm, locate(dtm, x, y));
}

GroundAnchor ray_intersect(const Dtm& dtm, const Vec3& origin, const Vec3& direction,
                           const RayCastOptions& options) {
  if (!origin.allFinite() || !direction.allFinite()) {
    throw Error(ErrorKind::Domain, "ray origin/direction not finite");
  }
  if (std::abs(direction.norm() - 1.0) > 1e-9) {
    throw Error(ErrorKind::Domain, "ray direction must be a unit vector");
  }
  const double cs = dtm.cell_size();
  const double tol = options.tolerance_cells * cs;

  auto height_gap = [&](double s) {
    const Vec3 p = origin + s * direction;
    return p.z() - patch_height(dtm, locate(dtm, p.x(), p.y()));
  };

  // Parameter interval over which the horizontal projection is in the hull.
  double s_lo = 0.0;
  double s_hi = std::numeric_limits<double>::infinity();
  const double lo[2] = {dtm.origin_x(), dtm.origin_y()};
  const double hi[2] = {dtm.max_x(), dtm.max_y()};
  for (int axis = 0; axis < 2; ++axis) {
    const double o = origin[axis];
    const double d = direction[axis];
    if (std::abs(d) < 1e-15) {
      if (o < lo[axis] || o > hi[axis]) {
        throw Error(ErrorKind::NoIntersection, "ray footprint outside DTM hull");
      }
      continue;
    }
    double a = (lo[axis] - o) / d;
    double b = (hi[axis] - o) / d;
    if (a > b) std::swap(a, b);
    s_lo = std::max(s_lo, a);
    s_hi = std::min(s_hi, b);
  }
  if (!(s_lo <= s_hi)) throw Error(ErrorKind::NoIntersection, "ray misses DTM hull");

  if (s_lo == 0.0 && height_gap(0.0) <= 0.0) {
    throw Error(ErrorKind::InvalidOrigin, "ray origin is not above the terrain surface");
  }

  if (std::isinf(s_hi)) {
    // Vertical ray: the hull never ends horizontally.
    if (direction.z() >= 0.0) throw Error(ErrorKind::NoIntersection, "vertical ray points up");
    s_hi = s_lo + (origin.z() - dtm.min_elevation()) / -direction.z() + cs;
  }

  // Walk patches in ray order. Within a patch the surface height along the
  // ray is a quadratic in s, so the gap g(s) = z(s) - h(s) is quadratic too.
  const double gx0 = (origin.x() - dtm.origin_x()) / cs;
  const double gy0 = (origin.y() - dtm.origin_y()) / cs;
  const double dgx = direction.x() / cs;
  const double dgy = direction.y() / cs;

  double s = s_lo;
  while (s < s_hi) {
    const double gx = gx0 + s * dgx;
    const double gy = gy0 + s * dgy;
    // Bias the cell choice in the travel direction so boundary points land in
    // the cell the ray is entering.
    const double bx = gx + (dgx > 0 ? 1e-12 : (dgx < 0 ? -1e-12 : 0.0));
    const double by = gy + (dgy > 0 ? 1e-12 : (dgy < 0 ? -1e-12 : 0.0));
    const int ci = std::clamp(static_cast<int>(std::floor(bx)), 0, dtm.width() - 2);
    const int cj = std::clamp(static_cast<int>(std::floor(by)), 0, dtm.height() - 2);

    double s_next = s_hi;
    if (dgx > 0) s_next = std::min(s_next, (ci + 1 - gx0) / dgx);
    if (dgx < 0) s_next = std::min(s_next, (ci - gx0) / dgx);
    if (dgy > 0) s_next = std::min(s_next, (cj + 1 - gy0) / dgy);
    if (dgy < 0) s_next = std::min(s_next, (cj - gy0) / dgy);
    if (!(s_next > s)) s_next = std::min(s_hi, s + 1e-9 * cs);

    // Quadratic coefficients of g on this patch in the local parameter
    // t = s' - s: g = c0 + c1 t + c2 t^2.
    const double z00 = dtm.at(ci, cj);
    const double z10 = dtm.at(ci + 1, cj);
    const double z01 = dtm.at(ci, cj + 1);
    const double z11 = dtm.at(ci + 1, cj + 1);
    const double ax = gx - ci;
    const double ay = gy - cj;
    // h = z00 + (z10-z00) fx + (z01-z00) fy + (z00-z10-z01+z11) fx fy
    const double hx = z10 - z00;
    const double hy = z01 - z00;
    const double hxy = z00 - z10 - z01 + z11;
    const double c0 = origin.z() + s * direction.z() - (z00 + hx * ax + hy * ay + hxy * ax * ay);
    const double c1 = direction.z() - (hx * dgx + hy * dgy + hxy * (ax * dgy + ay * dgx));
    const double c2 = -hxy * dgx * dgy;
    auto g = [&](double t) { return c0 + t * (c1 + t * c2); };
    const double span = s_next - s;

    // Split the segment at the vertex of the parabola so each piece is
    // monotone; the first piece with a sign change holds the first hit.
    double pieces[3] = {0.0, span, span};
    int n_pieces = 1;
    if (c2 != 0.0) {
      const double vertex = -c1 / (2.0 * c2);
      if (vertex > 0.0 && vertex < span) {
        pieces[1] = vertex;
        n_pieces = 2;
      }
    }
    for (int k = 0; k < n_pieces; ++k) {
      double a = pieces[k];
      double b = pieces[k + 1];
      double ga = g(a);
      const double gb = g(b);
      if (ga > 0.0 && gb > 0.0) continue;
      if (ga <= 0.0) {
        // Ray entered the hull below the surface, or a cell boundary sits
        // exactly on it.
        b = a;
      } else {
        while (b - a > tol) {
          const double m = 0.5 * (a + b);
          const double gm = g(m);
          if (gm > 0.0) {
            a = m;
            ga = gm;
          } else {
            b = m;
          }
        }
        const double gbb = g(b);
        if (ga - gbb != 0.0) b = a + (b - a) * ga / (ga - gbb);
      }
      GroundAnchor hit;
      hit.depth = s + b;
      hit.point = origin + hit.depth * direction;
      PatchCoord pc{ci, cj, std::clamp(ax + b * dgx, 0.0, 1.0), std::clamp(ay + b * dgy, 0.0, 1.0)};
      hit.normal = patch_normal(dtm, pc);
      if (!(hit.depth > 0.0)) {
        throw Error(ErrorKind::InvalidOrigin, "ray origin lies on the terrain surface");
      }
      return hit;
    }
    s = s_next;
  }
  throw Error(ErrorKind::NoIntersection, "ray leaves the DTM hull without hitting terrain");
}

TerrainSpec::Kind terrain_kind_from_string(const std::string& name) {
  if (name == "flat") return TerrainSpec::Kind::Flat;
  if (name == "ramp") return TerrainSpec::Kind::Ramp;
  if (name == "sinusoidal") return TerrainSpec::Kind::Sinusoidal;
  if (name == "fractal") return TerrainSpec::Kind::Fractal;
  throw Error(ErrorKind::Config, "unknown terrain kind '" + name + "'");
}

std::string to_string(TerrainSpec::Kind kind) {
  switch (kind) {
    case TerrainSpec::Kind::Flat: return "flat";
    case TerrainSpec::Kind::Ramp: return "ramp";
    case TerrainSpec::Kind::Sinusoidal: return "sinusoidal";
    case TerrainSpec::Kind::Fractal: return "fractal";
  }
  return "flat";
}

namespace {

// Diamond-square on a (2^k + 1)^2 lattice. Displacement std at lattice step h
// (meters) is (min(h, L) / L)^H, i.e. white above the wavelength L, fractal
// below it.
std::vector<double> midpoint_displacement(int size, double cell_size, double wavelength,
                                          double hurst, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(static_cast<std::size_t>(size) * size, 0.0);
  auto at = [&](int i, int j) -> double& { return z[static_cast<std::size_t>(j) * size + i]; };
  auto scale_for = [&](int step) {
    const double h = step * cell_size;
    return std::pow(std::min(h, wavelength) / wavelength, hurst);
  };

  const int n = size - 1;
  const double s0 = scale_for(n);
  at(0, 0) = s0 * normal(rng);
  at(n, 0) = s0 * normal(rng);
  at(0, n) = s0 * normal(rng);
  at(n, n) = s0 * normal(rng);

  for (int step = n; step > 1; step /= 2) {
    const int half = step / 2;
    const double scale = scale_for(half);
    // Diamond: centers of squares.
    for (int j = half; j < size; j += step) {
      for (int i = half; i < size; i += step) {
        const double avg =
            0.25 * (at(i - half, j - half) + at(i + half, j - half) + at(i - half, j + half) +
                    at(i + half, j + half));
        at(i, j) = avg + scale * normal(rng);
      }
    }
    // Square: edge midpoints.
    for (int j = 0; j < size; j += half) {
      for (int i = ((j / half) % 2 == 0) ? half : 0; i < size; i += step) {
        double sum = 0.0;
        int count = 0;
        if (i - half >= 0) { sum += at(i - half, j); ++count; }
        if (i + half < size) { sum += at(i + half, j); ++count; }
        if (j - half >= 0) { sum += at(i, j - half); ++count; }
        if (j + half < size) { sum += at(i, j + half); ++count; }
        at(i, j) = sum / count + scale * normal(rng);
      }
    }
  }
  return z;
}

}  // namespace

Dtm generate_synthetic_dtm(const TerrainSpec& spec) {
  if (spec.width < 2 || spec.height < 2) {
    throw Error(ErrorKind::Config, "terrain dims must be at least 2x2");
  }
  if (!(spec.cell_size > 0.0)) throw Error(ErrorKind::Config, "terrain cell_size must be > 0");
  if (!(spec.amplitude >= 0.0)) throw Error(ErrorKind::Config, "terrain amplitude must be >= 0");
  if (!(spec.wavelength > 0.0)) throw Error(ErrorKind::Config, "terrain wavelength must be > 0");

  const int w = spec.width;
  const int h = spec.height;
  std::vector<double> z(static_cast<std::size_t>(w) * h, spec.base_elevation);
  auto node_x = [&](int i) { return spec.origin_x + i * spec.cell_size; };
  auto node_y = [&](int j) { return spec.origin_y + j * spec.cell_size; };

  switch (spec.kind) {
    case TerrainSpec::Kind::Flat:
      break;
    case TerrainSpec::Kind::Ramp: {
      const double slope = spec.amplitude / spec.wavelength;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) z[static_cast<std::size_t>(j) * w + i] += slope * node_x(i);
      break;
    }
    case TerrainSpec::Kind::Sinusoidal: {
      const double k = 2.0 * std::numbers::pi / spec.wavelength;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
          z[static_cast<std::size_t>(j) * w + i] +=
              spec.amplitude * std::sin(k * node_x(i)) * std::sin(k * node_y(j));
      break;
    }
    case TerrainSpec::Kind::Fractal: {
      int size = 2;
      while (size - 1 < std::max(w, h) - 1) size = 2 * (size - 1) + 1;
      const std::vector<double> field =
          midpoint_displacement(size, spec.cell_size, spec.wavelength, spec.roughness, spec.seed);
      double mean = 0.0;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) mean += field[static_cast<std::size_t>(j) * size + i];
      mean /= static_cast<double>(w) * h;
      double peak = 0.0;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
          peak = std::max(peak, std::abs(field[static_cast<std::size_t>(j) * size + i] - mean));
      const double gain = peak > 0.0 ? spec.amplitude / peak : 0.0;
      for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
          z[static_cast<std::size_t>(j) * w + i] +=
              gain * (field[static_cast<std::size_t>(j) * size + i] - mean);
      break;
    }
  }
  return Dtm(spec.origin_x, spec.origin_y, spec.cell_size, w, h, std::move(z));
}

}  // namespace trnav
