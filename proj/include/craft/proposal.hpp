#pragma once

#include <cmath>
#include <vector>

#include "craft/geometry.hpp"

namespace craft {

/// Camera-stage output: a 3D box with depth uncertainty, class confidence and
/// the C-dim feature sampled at the keypoint.
struct ImageProposal {
  BBox3D box;
  double depth_var = 0.0;  // sigma^2, m^2
  double class_conf = 0.0;
  int class_id = 0;
  std::vector<double> feature;
  Vec2 keypoint = Vec2::Zero();
  int camera_id = 0;

  double depth_std() const { return std::sqrt(depth_var); }
};

/// Depth confidence exp(-sigma^2).
inline double depth_confidence(double depth_var) { return std::exp(-depth_var); }

/// 3D confidence: depth confidence times class confidence.
inline double proposal_score(const ImageProposal& p) { return depth_confidence(p.depth_var) * p.class_conf; }

}  // namespace craft
