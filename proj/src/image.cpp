#include "trnav/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "trnav/error.hpp"

namespace trnav {

GrayImage::GrayImage(int width, int height, float fill)
    : width_(width), height_(height),
      pixels_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
  if (width < 1 || height < 1) throw Error(ErrorKind::Config, "image dimensions must be positive");
}

GrayImage::GrayImage(int width, int height, std::vector<float> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) throw Error(ErrorKind::Config, "image dimensions must be positive");
  if (pixels_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::Config, "pixel count does not match image dimensions");
  }
}

double GrayImage::sample(double x, double y) const {
  const int x0 = std::clamp(static_cast<int>(std::floor(x)), 0, width_ - 2);
  const int y0 = std::clamp(static_cast<int>(std::floor(y)), 0, height_ - 2);
  const double fx = x - x0;
  const double fy = y - y0;
  const float* row0 = &pixels_[static_cast<std::size_t>(y0) * width_ + x0];
  const float* row1 = row0 + width_;
  return (1 - fy) * ((1 - fx) * row0[0] + fx * row0[1]) + fy * ((1 - fx) * row1[0] + fx * row1[1]);
}

bool GrayImage::window_fits(double x, double y, int radius) const {
  // Gradient samples reach radius + 1 from the center; bilinear sampling
  // needs one more node on the far side.
  const double reach = radius + 1.0;
  return x - reach >= 0.0 && y - reach >= 0.0 && x + reach <= width_ - 1 &&
         y + reach <= height_ - 1;
}

GrayImage downsample(const GrayImage& img) {
  static constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int w = img.width();
  const int h = img.height();
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * (n - 1) - i;
    }
    return i;
  };
  // Horizontal pass at the decimated columns.
  const int ow = (w + 1) / 2;
  const int oh = (h + 1) / 2;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k) acc += kTaps[k + 2] * img.at(reflect(2 * x + k, w), y);
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  GrayImage out(ow, oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = -2; k <= 2; ++k)
        acc += kTaps[k + 2] * tmp[static_cast<std::size_t>(reflect(2 * y + k, h)) * ow + x];
      out.at(x, y) = static_cast<float>(acc);
    }
  }
  return out;
}

std::vector<GrayImage> build_pyramid(const GrayImage& img, int levels) {
  if (levels < 1) throw Error(ErrorKind::Config, "pyramid needs at least one level");
  std::vector<GrayImage> pyr;
  pyr.reserve(static_cast<std::size_t>(levels));
  pyr.push_back(img);
  for (int l = 1; l < levels; ++l) pyr.push_back(downsample(pyr.back()));
  return pyr;
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

}  // namespace

GrayImage load_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Load, "cannot open image " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P5") throw Error(ErrorKind::Load, path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token(in));
    h = std::stoi(next_token(in));
    maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw Error(ErrorKind::Load, path.string() + ": malformed PGM header");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) {
    throw Error(ErrorKind::Load, path.string() + ": invalid PGM dimensions or maxval");
  }
  const std::size_t n = static_cast<std::size_t>(w) * h;
  const int bytes = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw Error(ErrorKind::Load, path.string() + ": truncated PGM pixel data");
  }
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned v = bytes == 1 ? raw[i] : (static_cast<unsigned>(raw[2 * i]) << 8) | raw[2 * i + 1];
    if (v > static_cast<unsigned>(maxval)) {
      throw Error(ErrorKind::Load, path.string() + ": sample exceeds maxval");
    }
    px[i] = static_cast<float>(static_cast<double>(v) / maxval);
  }
  return GrayImage(w, h, std::move(px));
}

void save_pgm(const GrayImage& img, const std::filesystem::path& path, bool sixteen_bit) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Load, "cannot write image " + path.string());
  const int maxval = sixteen_bit ? 65535 : 255;
  out << "P5\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  std::vector<unsigned char> raw;
  raw.reserve(img.pixels().size() * (sixteen_bit ? 2 : 1));
  for (float f : img.pixels()) {
    const double c = std::clamp(static_cast<double>(f), 0.0, 1.0);
    const unsigned v = static_cast<unsigned>(std::lround(c * maxval));
    if (sixteen_bit) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw Error(ErrorKind::Load, "write failed for " + path.string());
}

}  // namespace trnav
