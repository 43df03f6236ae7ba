#pragma once

#include "densefit/types.hpp"

#include <array>

namespace densefit {

Mat3 skew(const Vec3& v);

// Axis-angle to rotation matrix. Second-order Taylor expansion below 1e-8 rad.
Mat3 rodrigues(const Vec3& axis_angle);

// Partial derivatives dR/d(axis_angle[c]) for c = 0, 1, 2.
std::array<Mat3, 3> rodrigues_jacobian(const Vec3& axis_angle);

// Wraps the rotation magnitude into [0, 2π) keeping the axis.
Vec3 normalize_axis_angle(const Vec3& axis_angle);

}  // namespace densefit
