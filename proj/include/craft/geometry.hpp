#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "craft/error.hpp"

namespace craft {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  double w = a - 2.0 * kPi * std::floor((a + kPi) / (2.0 * kPi));
  // floor rounding can land exactly on +pi for inputs just below it
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

/// Signed shortest angular difference a - b, in [-pi, pi).
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

struct CameraIntrinsics {
  double fu = 1.0;
  double fv = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const {
    if (!(fu > 0.0) || !(fv > 0.0) || !std::isfinite(cx) || !std::isfinite(cy))
      throw InvalidInput("camera intrinsics need positive focal lengths");
  }
};

/// Rigid transform mapping points of a child frame into a parent frame.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {
    const Mat3 gram = rotation_.transpose() * rotation_;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
      throw InvalidInput("pose rotation is not orthonormal");
    if (std::abs(rotation_.determinant() - 1.0) > 1e-9)
      throw InvalidInput("pose rotation must have determinant +1");
    if (!translation_.allFinite()) throw InvalidInput("pose translation is not finite");
  }

  static Pose from_yaw(double yaw, const Vec3& translation) {
    return Pose(Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), translation);
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Vec3 apply(const Vec3& p) const { return rotation_ * p + translation_; }
  Vec3 apply_direction(const Vec3& d) const { return rotation_ * d; }

  Pose inverse() const {
    Pose inv;
    inv.rotation_ = rotation_.transpose();
    inv.translation_ = -(inv.rotation_ * translation_);
    return inv;
  }

  /// this * other: first apply other, then this.
  Pose compose(const Pose& other) const {
    Pose out;
    out.rotation_ = rotation_ * other.rotation_;
    out.translation_ = rotation_ * other.translation_ + translation_;
    return out;
  }

  double yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Oriented box in the vehicle frame. Yaw is counter-clockwise from +x; the
/// length l runs along the heading, the width w across it.
struct BBox3D {
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();  // w, l, h
  double yaw = 0.0;
  Vec2 velocity = Vec2::Zero();

  double width() const { return dims.x(); }
  double length() const { return dims.y(); }
  double height() const { return dims.z(); }
};

struct PolarPoint {
  double r = 0.0;
  double phi = 0.0;
  double z = 0.0;
};

/// Pixel keypoint plus depth back into the camera frame (x right, y down, z forward).
inline Vec3 unproject_keypoint(double u, double v, double depth, const CameraIntrinsics& k) {
  if (!std::isfinite(u) || !std::isfinite(v) || !std::isfinite(depth))
    throw InvalidInput("unproject_keypoint: non-finite input");
  if (depth < 0.0) throw InvalidInput("unproject_keypoint: negative depth");
  k.validate();
  return {(u - k.cx) * depth / k.fu, (v - k.cy) * depth / k.fv, depth};
}

inline Vec2 project_point(const Vec3& p, const CameraIntrinsics& k) {
  if (!(p.z() > 0.0)) throw BehindCamera("project_point: point is not in front of the camera");
  k.validate();
  return {k.fu * p.x() / p.z() + k.cx, k.fv * p.y() / p.z() + k.cy};
}

inline Vec3 transform_point(const Vec3& p, const Pose& pose) { return pose.apply(p); }

inline PolarPoint cart_to_polar(const Vec3& p) {
  const double r = std::hypot(p.x(), p.y());
  const double phi = r == 0.0 ? 0.0 : wrap_angle(std::atan2(p.y(), p.x()));
  return {r, phi, p.z()};
}

inline Vec3 polar_to_cart(const PolarPoint& p) {
  return {p.r * std::cos(p.phi), p.r * std::sin(p.phi), p.z};
}

inline Vec2 heading(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

/// Eight corners: bit 0 selects front/back along the heading, bit 1 left/right,
/// bit 2 top/bottom.
inline std::array<Vec3, 8> box_corners(const BBox3D& b) {
  if (!(b.dims.array() > 0.0).all()) throw InvalidInput("box_corners: dims must be positive");
  const Vec2 fwd = heading(b.yaw);
  const Vec2 left(-fwd.y(), fwd.x());
  std::array<Vec3, 8> out;
  for (int i = 0; i < 8; ++i) {
    const double sl = (i & 1) ? -0.5 : 0.5;
    const double sw = (i & 2) ? -0.5 : 0.5;
    const double sh = (i & 4) ? -0.5 : 0.5;
    const Vec2 bev = sl * b.length() * fwd + sw * b.width() * left;
    out[i] = b.center + Vec3(bev.x(), bev.y(), sh * b.height());
  }
  return out;
}

/// Expresses a BEV point in the box frame (x along heading, y to the left).
inline Vec2 to_box_frame(const BBox3D& b, const Vec2& p) {
  const Vec2 d = p - b.center.head<2>();
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

/// BEV footprint membership with an optional outward margin (m).
inline bool inside_bev(const BBox3D& b, const Vec2& p, double margin = 0.0) {
  const Vec2 local = to_box_frame(b, p);
  return std::abs(local.x()) <= 0.5 * b.length() + margin &&
         std::abs(local.y()) <= 0.5 * b.width() + margin;
}

inline double bev_distance(const Vec3& a, const Vec3& b) { return (a.head<2>() - b.head<2>()).norm(); }

}  // namespace craft
