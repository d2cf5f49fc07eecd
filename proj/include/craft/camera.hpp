#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "craft/error.hpp"
#include "craft/geometry.hpp"
#include "craft/ops.hpp"

namespace craft {

/// Intrinsics plus the camera -> vehicle extrinsic. Camera frame: x right,
/// y down, z forward.
struct CameraRig {
  CameraIntrinsics intrinsics;
  Pose cam_to_vehicle;
  int width = 0;
  int height = 0;

  /// Camera looking along vehicle azimuth `yaw` from height `mount_z`.
  static CameraRig looking_at(double yaw, double mount_z, CameraIntrinsics k, int width, int height) {
    Mat3 R;
    const Vec3 forward(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = forward;
    return CameraRig{k, Pose(R, Vec3(0.0, 0.0, mount_z)), width, height};
  }

  Vec3 to_camera(const Vec3& p_vehicle) const { return cam_to_vehicle.inverse().apply(p_vehicle); }

  /// Pixel of a vehicle-frame point, or nothing when it is behind the camera.
  std::optional<Vec2> pixel_of(const Vec3& p_vehicle) const {
    const Vec3 c = to_camera(p_vehicle);
    if (c.z() <= 1e-6) return std::nullopt;
    return project_point(c, intrinsics);
  }

  bool in_image(const Vec2& px) const { return px.x() >= 0 && px.y() >= 0 && px.x() < width && px.y() < height; }
};

/// Dense per-camera feature map [H, W, C], row-major, stored at `stride`
/// image pixels per cell.
struct FeatureMap {
  std::size_t H = 0, W = 0, C = 0;
  double stride = 4.0;
  std::vector<double> data;

  FeatureMap() = default;
  FeatureMap(std::size_t h, std::size_t w, std::size_t c, double s) : H(h), W(w), C(c), stride(s), data(h * w * c, 0.0) {}

  double* cell(std::size_t y, std::size_t x) { return &data[(y * W + x) * C]; }
  const double* cell(std::size_t y, std::size_t x) const { return &data[(y * W + x) * C]; }

  /// Image pixel -> continuous cell coordinates (cell centres at integers).
  Vec2 to_cells(const Vec2& px) const { return Vec2((px.x() + 0.5) / stride - 0.5, (px.y() + 0.5) / stride - 0.5); }

  std::vector<double> sample(double x, double y) const {
    std::vector<double> out(C, 0.0);
    const auto tap = tc::detail::bilinear_taps(x, y, H, W, C);
    for (int k = 0; k < 4; ++k) {
      if (!tap.inside[k]) continue;
      for (std::size_t c = 0; c < C; ++c) out[c] += tap.weight[k] * data[tap.offset[k] + c];
    }
    return out;
  }
};

struct PatchConfig {
  double W_scale = 3.5;
  double alpha = 2.0;
  double beta = 55.0;
  std::size_t out_size = 7;

  void validate() const {
    if (!(W_scale > 0.0) || !(beta > 0.0) || out_size < 1) throw ConfigError("PatchConfig: invalid values");
  }
};

/// floor(W * exp(-d / beta + alpha)) before any rounding.
inline int adaptive_patch_size_raw(double d, const PatchConfig& cfg) {
  if (!(d >= 0.0)) throw InvalidInput("adaptive_patch_size: distance must be non-negative");
  return static_cast<int>(std::floor(cfg.W_scale * std::exp(-d / cfg.beta + cfg.alpha)));
}

/// Patch side in image pixels, raised to the next odd integer >= 3.
inline int adaptive_patch_size(double d, const PatchConfig& cfg) {
  int tau = std::max(adaptive_patch_size_raw(d, cfg), 3);
  if (tau % 2 == 0) ++tau;
  return tau;
}

/// side x side window (cell units) around `center`, bilinearly resized to
/// out x out. Returns [out, out, C]; cells outside the map read as zero.
inline std::vector<double> extract_patch(const FeatureMap& map, const Vec2& center, double side, std::size_t out) {
  if (!(side > 0.0)) throw InvalidInput("extract_patch: side must be positive");
  std::vector<double> patch(out * out * map.C, 0.0);
  const double step = out > 1 ? std::max(side - 1.0, 0.0) / static_cast<double>(out - 1) : 0.0;
  const double half = static_cast<double>(out - 1) / 2.0;
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < out; ++j) {
      const double y = center.y() + (static_cast<double>(i) - half) * step;
      const double x = center.x() + (static_cast<double>(j) - half) * step;
      const auto tap = tc::detail::bilinear_taps(x, y, map.H, map.W, map.C);
      double* dst = &patch[(i * out + j) * map.C];
      for (int k = 0; k < 4; ++k) {
        if (!tap.inside[k]) continue;
        for (std::size_t c = 0; c < map.C; ++c) dst[c] += tap.weight[k] * map.data[tap.offset[k] + c];
      }
    }
  }
  return patch;
}

}  // namespace craft
