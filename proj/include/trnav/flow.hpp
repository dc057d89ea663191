#pragma once

#include <filesystem>
#include <iosfwd>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "trnav/image.hpp"

namespace trnav {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Square weighting window of side 2*radius+1, normalized to unit sum.
class KernelWindow {
 public:
  enum class Kind { Gaussian, Binary };

  static KernelWindow gaussian(int radius, double sigma);
  static KernelWindow binary(int radius);

  int radius() const noexcept { return radius_; }
  int side() const noexcept { return 2 * radius_ + 1; }
  Kind kind() const noexcept { return kind_; }
  double sigma() const noexcept { return sigma_; }
  /// Row-major weights, index (dy + r) * side + (dx + r).
  const std::vector<double>& weights() const noexcept { return weights_; }
  double weight(int dx, int dy) const {
    return weights_[static_cast<std::size_t>(dy + radius_) * side() + (dx + radius_)];
  }

 private:
  KernelWindow(int radius, Kind kind, double sigma);

  int radius_;
  Kind kind_;
  double sigma_;
  std::vector<double> weights_;
};

/// Default tracking window: Gaussian, radius 7, sigma 3.5 px.
KernelWindow default_window();

enum class TrackStatus { Tracked, Lost };

struct FlowFeature {
  int id = 0;
  Vec2 u1 = Vec2::Zero();
  Vec2 u2 = Vec2::Zero();
  TrackStatus status = TrackStatus::Lost;
  double score = 0.0;

  bool tracked() const noexcept { return status == TrackStatus::Tracked; }
  Vec2 flow() const { return u2 - u1; }
};

/// Autocorrelation matrix sum_W w * [Ix^2, IxIy; IxIy, Iy^2] with central
/// difference gradients sampled at center + (dx, dy). Throws Error{Domain}
/// when the window (plus gradient rim) overruns the image.
Mat2 structure_tensor(const GrayImage& img, const Vec2& center, const KernelWindow& window);

/// min(lambda1, lambda2) of a symmetric 2x2 matrix, clamped at zero.
double shi_tomasi_score(const Mat2& m);

struct CornerOptions {
  int max_count = 300;
  double min_score = 1e-6;
  double min_spacing = 10.0;
};

/// Shi-Tomasi corners sorted by descending score, pairwise at least
/// min_spacing apart. Scores are evaluated in parallel over rows.
std::vector<Vec2> detect_corners(const GrayImage& img, const KernelWindow& window,
                                 const CornerOptions& options);

/// Dense Shi-Tomasi score map (zero where the window does not fit).
std::vector<double> corner_score_map(const GrayImage& img, const KernelWindow& window);

/// N x N uniform grid inside [margin, dim - margin], row-major (y outer).
/// Throws Error{Config} when n_per_side < 2 or the margins leave no room.
std::vector<Vec2> seed_regular_grid(int width, int height, int n_per_side, double margin);

/// One Lucas-Kanade update d = M^-1 * (-sum w Ix It, -sum w Iy It) with
/// It = I2(x + guess) - I1(x). Throws Error{LostFeature} when a window leaves
/// an image and Error{Untrackable} when min eig(M) < 1e-6 * trace(M).
Vec2 lk_step(const GrayImage& img1, const GrayImage& img2, const Vec2& u1, const Vec2& guess,
             const KernelWindow& window);

struct TrackerConfig {
  int levels = 4;
  KernelWindow window = default_window();
  int max_iters = 30;
  double eps = 0.01;  // px, increment norm that ends a level
  double max_flow = std::numeric_limits<double>::infinity();
};

/// Coarse-to-fine translational tracking of every point. Features run
/// independently (OpenMP over points); results are bit-identical to the
/// serial reference.
std::vector<FlowFeature> track_pyramidal(const GrayImage& img1, const GrayImage& img2,
                                         const std::vector<Vec2>& points,
                                         const TrackerConfig& config);

/// Same as track_pyramidal with pyramids already built (levels must match).
std::vector<FlowFeature> track_pyramids(const std::vector<GrayImage>& pyr1,
                                        const std::vector<GrayImage>& pyr2,
                                        const std::vector<Vec2>& points,
                                        const TrackerConfig& config);

/// Frame-to-frame tracking composed over the whole sequence; the result pairs
/// the first frame with the last.
std::vector<FlowFeature> chain_tracks(const std::vector<GrayImage>& frames,
                                      const std::vector<Vec2>& points,
                                      const TrackerConfig& config);

/// Flow CSV: header `id,u1x,u1y,u2x,u2y,status,score`, 6 decimals.
void write_flow_csv(const std::vector<FlowFeature>& features, std::ostream& out);
void save_flow_csv(const std::vector<FlowFeature>& features, const std::filesystem::path& path);
/// Parse errors raise Error{Load} naming the offending line.
std::vector<FlowFeature> read_flow_csv(std::istream& in, const std::string& source_name = "<stream>");
std::vector<FlowFeature> load_flow_csv(const std::filesystem::path& path);

namespace reference {

/// Naive double-loop versions of the windowed sums; test and benchmark
/// baselines for the optimized kernels.
Mat2 structure_tensor(const GrayImage& img, const Vec2& center, const KernelWindow& window);
Vec2 lk_rhs(const GrayImage& img1, const GrayImage& img2, const Vec2& u1, const Vec2& guess,
            const KernelWindow& window);
std::vector<double> corner_score_map(const GrayImage& img, const KernelWindow& window);
std::vector<FlowFeature> track_pyramidal(const GrayImage& img1, const GrayImage& img2,
                                         const std::vector<Vec2>& points,
                                         const TrackerConfig& config);

}  // namespace reference

}  // namespace trnav
