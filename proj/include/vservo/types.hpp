#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace vservo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat7 = Eigen::Matrix<double, 7, 7>;
using Vec20 = Eigen::Matrix<double, 20, 1>;

using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat20 = Eigen::Matrix<double, 20, 20>;
using Mat20x6 = Eigen::Matrix<double, 20, 6>;
using Mat6x20 = Eigen::Matrix<double, 6, 20>;

/// Error-state layout: [q_v, omega, rho_o, rho_o_dot, sigma, varrho, mu_v].
namespace idx {
inline constexpr int kDim = 20;
inline constexpr int q = 0;
inline constexpr int omega = 3;
inline constexpr int rho = 6;
inline constexpr int rho_dot = 9;
inline constexpr int sigma = 12;
inline constexpr int varrho = 14;
inline constexpr int mu = 17;
}  // namespace idx

/// Matrix form of the cross product, skew(a) * b == a.cross(b).
inline Mat3 skew(const Vec3& a) {
  Mat3 m;
  m << 0.0, -a.z(), a.y(),
       a.z(), 0.0, -a.x(),
      -a.y(), a.x(), 0.0;
  return m;
}

}  // namespace vservo
