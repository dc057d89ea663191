#pragma once

#include <Eigen/Core>

namespace trnav {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// (roll, pitch, yaw) in radians.
struct EulerAngles {
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;

  Vec3 as_vector() const { return {roll, pitch, yaw}; }
  static EulerAngles from_vector(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
};

/// Pinhole camera with the principal point at the image center and no
/// distortion. Pixel origin is the top-left corner, x right, y down.
class CameraIntrinsics {
 public:
  CameraIntrinsics(int width_px, int height_px, double fov_long_deg, double fov_short_deg);

  int width_px() const noexcept { return width_px_; }
  int height_px() const noexcept { return height_px_; }
  double fov_long_deg() const noexcept { return fov_long_deg_; }
  double fov_short_deg() const noexcept { return fov_short_deg_; }

  /// Focal length along the image x axis (long side), pixels.
  double f_long() const noexcept { return f_long_; }
  /// Focal length along the image y axis (short side), pixels.
  double f_short() const noexcept { return f_short_; }
  double cx() const noexcept { return 0.5 * width_px_; }
  double cy() const noexcept { return 0.5 * height_px_; }

  bool in_bounds(const Vec2& u) const noexcept {
    return u.x() >= 0.0 && u.x() <= width_px_ && u.y() >= 0.0 && u.y() <= height_px_;
  }

 private:
  int width_px_;
  int height_px_;
  double fov_long_deg_;
  double fov_short_deg_;
  double f_long_;
  double f_short_;
};

/// Absolute camera state: position p1 in the world frame and the attitude
/// whose rotation maps camera coordinates to world coordinates.
struct Pose {
  Vec3 position = Vec3::Zero();
  EulerAngles attitude;
};

/// Frame-to-frame motion with X_C2 = R12 * X_C1 + translation.
/// The translation is expressed in the second camera frame.
struct RelativeMotion {
  Vec3 translation = Vec3::Zero();
  EulerAngles attitude_delta;
};

/// Homogeneous camera-frame ray with unit z component.
struct ImageRay {
  Vec3 q{0.0, 0.0, 1.0};
};

/// R = Rz(yaw) * Ry(pitch) * Rx(roll).
Mat3 rotation_from_euler(const EulerAngles& angles);

/// Inverse of rotation_from_euler for |pitch| <= 89.9 deg; throws
/// Error{Domain} inside the gimbal-lock band.
EulerAngles euler_from_rotation(const Mat3& r);

ImageRay pixel_to_ray(const CameraIntrinsics& intrinsics, const Vec2& u);

/// Throws Error{Domain} when the ray projects outside the frame.
Vec2 ray_to_pixel(const CameraIntrinsics& intrinsics, const ImageRay& ray);

/// Unit world-frame direction of a camera ray.
Vec3 camera_ray_to_world(const Pose& pose, const ImageRay& ray);

/// Relative motion between two absolute poses.
RelativeMotion relative_motion(const Pose& first, const Pose& second);

/// Second absolute pose from the first pose and the relative motion.
Pose compose(const Pose& first, const RelativeMotion& motion);

/// Angle-wise difference wrapped to (-pi, pi].
EulerAngles angle_difference(const EulerAngles& a, const EulerAngles& b);

double wrap_angle(double a);

constexpr double deg2rad(double deg) { return deg * 0.017453292519943295; }
constexpr double rad2deg(double rad) { return rad * 57.29577951308232; }

}  // namespace trnav
