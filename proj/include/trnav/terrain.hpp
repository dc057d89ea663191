#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace trnav {

using Vec3 = Eigen::Vector3d;

/// Regular-grid digital terrain map. Node (i, j) sits at
/// (origin_x + i*cell_size, origin_y + j*cell_size) and stores the elevation
/// at row-major index j*width + i. Between nodes the surface is the bilinear
/// patch of the four surrounding nodes. World frame is x east, y north, z up.
///
/// Immutable after construction; every query is const and thread-safe.
class Dtm {
 public:
  Dtm(double origin_x, double origin_y, double cell_size, int width, int height,
      std::vector<double> elevations);

  double origin_x() const noexcept { return origin_x_; }
  double origin_y() const noexcept { return origin_y_; }
  double cell_size() const noexcept { return cell_size_; }
  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<double>& elevations() const noexcept { return elevations_; }

  double max_x() const noexcept { return origin_x_ + (width_ - 1) * cell_size_; }
  double max_y() const noexcept { return origin_y_ + (height_ - 1) * cell_size_; }
  double min_elevation() const noexcept { return min_z_; }
  double max_elevation() const noexcept { return max_z_; }

  double at(int i, int j) const { return elevations_[static_cast<std::size_t>(j) * width_ + i]; }

  bool contains(double x, double y) const noexcept;

 private:
  double origin_x_;
  double origin_y_;
  double cell_size_;
  int width_;
  int height_;
  std::vector<double> elevations_;
  double min_z_ = 0.0;
  double max_z_ = 0.0;
};

/// Feature ground point Q_E on the terrain with the tangent-plane normal N
/// there, and the distance along the casting ray.
struct GroundAnchor {
  Vec3 point;
  Vec3 normal;
  double depth = 0.0;
};

/// Bilinear elevation. Throws Error{Domain} naming the axis when (x, y) is
/// outside the grid hull.
double elevation(const Dtm& dtm, double x, double y);

/// Upward unit normal of the bilinear surface, normalize(-dz/dx, -dz/dy, 1).
Vec3 surface_normal(const Dtm& dtm, double x, double y);

struct RayCastOptions {
  /// Bisection stops once the bracket on the ray parameter is narrower than
  /// this fraction of the cell size.
  double tolerance_cells = 1e-4;
};

/// First intersection of origin + s*direction (s > 0) with the terrain.
/// Cells are visited in ray order (2D DDA over the horizontal projection);
/// inside each cell the height difference along the ray is quadratic, which
/// gives exact sign brackets that are refined by bisection.
///
/// Throws Error{NoIntersection} when the ray leaves the hull without a hit
/// and Error{InvalidOrigin} when the origin is not above the surface.
GroundAnchor ray_intersect(const Dtm& dtm, const Vec3& origin, const Vec3& direction,
                           const RayCastOptions& options = {});

struct TerrainSpec {
  enum class Kind { Flat, Ramp, Sinusoidal, Fractal };

  Kind kind = Kind::Flat;
  double amplitude = 0.0;    // m; ramp rises `amplitude` per `wavelength` of x
  double wavelength = 1000.0;
  std::uint64_t seed = 0;
  int width = 257;
  int height = 257;
  double cell_size = 10.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  double base_elevation = 0.0;
  double roughness = 0.8;    // fractal Hurst exponent
};

TerrainSpec::Kind terrain_kind_from_string(const std::string& name);
std::string to_string(TerrainSpec::Kind kind);

/// Deterministic synthetic terrain. Sinusoidal: base + A*sin(2*pi*x/L)*sin(2*pi*y/L)
/// in world coordinates. Fractal: seeded midpoint displacement rescaled so the
/// largest deviation from the mean equals the amplitude.
Dtm generate_synthetic_dtm(const TerrainSpec& spec);

/// ESRI ASCII grid (.asc). The first data row is the northernmost.
/// NODATA cells, short files and malformed headers raise Error{Load}.
Dtm load_esri_ascii(const std::filesystem::path& path);
Dtm parse_esri_ascii(std::istream& in, const std::string& source_name = "<stream>");
void save_esri_ascii(const Dtm& dtm, const std::filesystem::path& path);
void write_esri_ascii(const Dtm& dtm, std::ostream& out);

}  // namespace trnav
