#pragma once

#include <filesystem>
#include <vector>

namespace trnav {

/// Single-channel image, row-major, intensities in [0, 1]. Pixel (x, y) has
/// its sample at integer coordinates; x right, y down.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, float fill = 0.0f);
  GrayImage(int width, int height, std::vector<float> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  const std::vector<float>& pixels() const noexcept { return pixels_; }
  std::vector<float>& pixels() noexcept { return pixels_; }

  float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }

  /// Bilinear sample; caller keeps (x, y) inside [0, w-1] x [0, h-1].
  double sample(double x, double y) const;

  /// True when the (2r+1)^2 window at (x, y), plus the one-pixel rim the
  /// central-difference gradient needs, lies inside the image.
  bool window_fits(double x, double y, int radius) const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

/// One pyramid step: separable 5-tap binomial [1 4 6 4 1]/16 smoothing
/// (reflected borders), then every other sample.
GrayImage downsample(const GrayImage& img);

/// levels >= 1; element 0 is the input.
std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels);

/// Binary PGM (P5), maxval <= 65535 (16-bit samples big-endian).
/// Values are normalized by maxval on load. Errors raise Error{Load}.
GrayImage load_pgm(const std::filesystem::path& path);
/// Writes 16-bit when `sixteen_bit`, else 8-bit; values clamped to [0, 1].
void save_pgm(const GrayImage& img, const std::filesystem::path& path, bool sixteen_bit = true);

}  // namespace trnav
