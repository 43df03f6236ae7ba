#include "densefit/rotation.hpp"

#include <cmath>
#include <numbers>

namespace densefit {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
  Mat3 k;
  k << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return k;
}

Mat3 rodrigues(const Vec3& axis_angle) {
  const double theta_sq = axis_angle.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  const Mat3 k = skew(axis_angle);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + k + 0.5 * k * k;
  }
  return Mat3::Identity() + (std::sin(theta) / theta) * k + ((1.0 - std::cos(theta)) / theta_sq) * k * k;
}

std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle) {
  std::array<Mat3, 3> out;
  const double theta_sq = axis_angle.squaredNorm();
  const Mat3 k = skew(axis_angle);
  if (std::sqrt(theta_sq) < kSmallAngle) {
    for (int c = 0; c < 3; ++c) {
      const Mat3 e = skew(Vec3::Unit(c));
      out[c] = e + 0.5 * (e * k + k * e);
    }
    return out;
  }
  // dR/dw_c = (w_c [w]x + [w x (I - R) e_c]x) R / |w|^2
  const Mat3 r = rodrigues(axis_angle);
  const Mat3 i_minus_r = Mat3::Identity() - r;
  for (int c = 0; c < 3; ++c) {
    const Vec3 col = axis_angle.cross(i_minus_r.col(c));
    out[c] = ((axis_angle[c] * k + skew(col)) / theta_sq) * r;
  }
  return out;
}

Vec3 normalize_axis_angle(const Vec3& axis_angle) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double theta = axis_angle.norm();
  if (theta < two_pi) {
    return axis_angle;
  }
  return axis_angle * (std::fmod(theta, two_pi) / theta);
}

}  // namespace densefit
