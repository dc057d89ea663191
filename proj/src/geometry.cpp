#include "trnav/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "trnav/error.hpp"

namespace trnav {

namespace {

constexpr double kGimbalLimit = deg2rad(89.9);
// Pixel/ray bound slack, relative.
constexpr double kEdgeSlack = 1e-9;

}  // namespace

CameraIntrinsics::CameraIntrinsics(int width_px, int height_px, double fov_long_deg,
                                   double fov_short_deg)
    : width_px_(width_px),
      height_px_(height_px),
      fov_long_deg_(fov_long_deg),
      fov_short_deg_(fov_short_deg) {
  if (width_px < 2 || height_px < 2) {
    throw Error(ErrorKind::Config, "image dimensions must be at least 2x2 pixels");
  }
  if (!(fov_long_deg > 0.0 && fov_long_deg < 180.0) ||
      !(fov_short_deg > 0.0 && fov_short_deg < 180.0)) {
    throw Error(ErrorKind::Config, "field of view must lie in (0, 180) degrees");
  }
  f_long_ = 0.5 * width_px / std::tan(0.5 * deg2rad(fov_long_deg));
  f_short_ = 0.5 * height_px / std::tan(0.5 * deg2rad(fov_short_deg));
}

Mat3 rotation_from_euler(const EulerAngles& a) {
  const double cr = std::cos(a.roll), sr = std::sin(a.roll);
  const double cp = std::cos(a.pitch), sp = std::sin(a.pitch);
  const double cy = std::cos(a.yaw), sy = std::sin(a.yaw);
  Mat3 r;
  r << cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr,
       sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr,
       -sp,     cp * sr,                cp * cr;
  return r;
}

EulerAngles euler_from_rotation(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  if (std::abs(pitch) > kGimbalLimit) {
    std::ostringstream msg;
    msg << "pitch " << rad2deg(pitch) << " deg inside the gimbal-lock band";
    throw Error(ErrorKind::Domain, msg.str());
  }
  return {std::atan2(r(2, 1), r(2, 2)), pitch, std::atan2(r(1, 0), r(0, 0))};
}

ImageRay pixel_to_ray(const CameraIntrinsics& k, const Vec2& u) {
  const double sx = kEdgeSlack * k.width_px();
  const double sy = kEdgeSlack * k.height_px();
  if (!(u.x() >= -sx && u.x() <= k.width_px() + sx && u.y() >= -sy && u.y() <= k.height_px() + sy)) {
    std::ostringstream msg;
    msg << "pixel (" << u.x() << ", " << u.y() << ") outside " << k.width_px() << "x"
        << k.height_px() << " image";
    throw Error(ErrorKind::Domain, msg.str());
  }
  return ImageRay{Vec3((u.x() - k.cx()) / k.f_long(), (u.y() - k.cy()) / k.f_short(), 1.0)};
}

Vec2 ray_to_pixel(const CameraIntrinsics& k, const ImageRay& ray) {
  const Vec2 u(k.cx() + k.f_long() * ray.q.x(), k.cy() + k.f_short() * ray.q.y());
  const double sx = kEdgeSlack * k.width_px();
  const double sy = kEdgeSlack * k.height_px();
  if (!(u.x() >= -sx && u.x() <= k.width_px() + sx && u.y() >= -sy && u.y() <= k.height_px() + sy)) {
    throw Error(ErrorKind::Domain, "ray projects outside the frame");
  }
  return u;
}

Vec3 camera_ray_to_world(const Pose& pose, const ImageRay& ray) {
  return (rotation_from_euler(pose.attitude) * ray.q).normalized();
}

RelativeMotion relative_motion(const Pose& first, const Pose& second) {
  const Mat3 r1 = rotation_from_euler(first.attitude);
  const Mat3 r2 = rotation_from_euler(second.attitude);
  const Mat3 r12 = r2.transpose() * r1;
  return {r2.transpose() * (first.position - second.position), euler_from_rotation(r12)};
}

Pose compose(const Pose& first, const RelativeMotion& motion) {
  const Mat3 r1 = rotation_from_euler(first.attitude);
  const Mat3 r12 = rotation_from_euler(motion.attitude_delta);
  const Mat3 r2 = r1 * r12.transpose();
  Pose second;
  second.attitude = euler_from_rotation(r2);
  second.position = first.position - r2 * motion.translation;
  return second;
}

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

EulerAngles angle_difference(const EulerAngles& a, const EulerAngles& b) {
  return {wrap_angle(a.roll - b.roll), wrap_angle(a.pitch - b.pitch), wrap_angle(a.yaw - b.yaw)};
}

}  // namespace trnav
