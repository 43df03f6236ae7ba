#include "densefit/camera.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace densefit {

double default_focal(int width, int height) {
  const double w = width;
  const double h = height;
  return std::sqrt(w * w + h * h);
}

Camera Camera::with_default_intrinsics(int width, int height, const Mat3& rotation,
                                       const Vec3& translation) {
  Camera cam;
  cam.fx = cam.fy = default_focal(width, height);
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.rotation = rotation;
  cam.translation = translation;
  cam.width = width;
  cam.height = height;
  return cam;
}

void validate(const Camera& camera) {
  if (!(camera.fx > 0.0) || !(camera.fy > 0.0) || !std::isfinite(camera.fx) || !std::isfinite(camera.fy)) {
    throw InvariantError("camera focal lengths must be positive and finite");
  }
  if (!std::isfinite(camera.cx) || !std::isfinite(camera.cy) || !camera.translation.allFinite()) {
    throw InvariantError("camera principal point and translation must be finite");
  }
  if (camera.width < 1 || camera.height < 1) {
    throw InvariantError("camera image size must be at least 1x1");
  }
  const Mat3& r = camera.rotation;
  if (!r.allFinite() || !(r.transpose() * r).isApprox(Mat3::Identity(), 1e-9) ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw InvariantError("camera rotation must be orthonormal with determinant +1");
  }
}

bool Projection::all_valid() const {
  return std::all_of(valid.begin(), valid.end(), [](std::uint8_t v) { return v != 0; });
}

Projection project(const Camera& camera, const Points3& points, double min_depth) {
  Projection out;
  const Eigen::Index m = points.rows();
  out.pixels.resize(m, 2);
  out.valid.assign(static_cast<std::size_t>(m), 0);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 pc = camera.to_camera(points.row(i).transpose());
    if (!(pc.z() > min_depth)) {
      out.pixels.row(i).setConstant(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    out.pixels(i, 0) = camera.fx * pc.x() / pc.z() + camera.cx;
    out.pixels(i, 1) = camera.fy * pc.y() / pc.z() + camera.cy;
    out.valid[static_cast<std::size_t>(i)] = 1;
  }
  return out;
}

}  // namespace densefit
