#pragma once

#include "densefit/types.hpp"

#include <cstdint>
#include <vector>

namespace densefit {

/// Full-perspective pinhole camera. `rotation` and `translation` map world
/// points into camera space (x right, y down, z forward).
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  /// Focal length sqrt(w² + h²), principal point at the image center.
  static Camera with_default_intrinsics(int width, int height, const Mat3& rotation,
                                        const Vec3& translation);

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
};

/// Throws InvariantError when intrinsics, rotation, or image size are invalid.
void validate(const Camera& camera);

double default_focal(int width, int height);

constexpr double kMinDepth = 1e-4;

/// Projected pixel positions plus a per-point flag; points at or behind the
/// camera plane (z <= min_depth) are flagged invalid and get NaN pixels.
struct Projection {
  Points2 pixels;
  std::vector<std::uint8_t> valid;

  bool all_valid() const;
};

Projection project(const Camera& camera, const Points3& points, double min_depth = kMinDepth);

}  // namespace densefit
