#pragma once

#include "craft/geometry.hpp"

namespace craft {

enum class DetectionSource { fused, camera_only };

struct Detection {
  BBox3D box;
  double score = 0.0;
  int class_id = 0;
  DetectionSource source = DetectionSource::camera_only;
};

}  // namespace craft
