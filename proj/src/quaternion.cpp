#include "vservo/quaternion.hpp"

#include <algorithm>
#include <cmath>

#include "vservo/errors.hpp"

namespace vservo {

UnitQuaternion UnitQuaternion::canonical(Vec3 vec, double scalar) {
  bool flip = scalar < 0.0;
  if (scalar == 0.0) {
    for (int i = 0; i < 3; ++i) {
      if (vec(i) != 0.0) {
        flip = vec(i) < 0.0;
        break;
      }
    }
  }
  if (flip) {
    vec = -vec;
    scalar = -scalar;
  }
  return UnitQuaternion(vec, scalar);
}

UnitQuaternion UnitQuaternion::from_components(const Vec3& vec, double scalar) {
  const double n = std::sqrt(vec.squaredNorm() + scalar * scalar);
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-9) {
    throw InvalidArgument("quaternion is not unit (norm " + std::to_string(n) + ")");
  }
  return canonical(vec / n, scalar / n);
}

UnitQuaternion UnitQuaternion::normalized(const Vec3& vec, double scalar) {
  const double n = std::sqrt(vec.squaredNorm() + scalar * scalar);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw InvalidArgument("cannot normalize a zero or non-finite quaternion");
  }
  return canonical(vec / n, scalar / n);
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (!(n > 0.0)) {
    return identity();
  }
  return normalized(axis / n * std::sin(0.5 * angle), std::cos(0.5 * angle));
}

UnitQuaternion UnitQuaternion::from_vector_part(const Vec3& v) {
  const double s2 = v.squaredNorm();
  if (s2 < 1.0) {
    return normalized(v, std::sqrt(1.0 - s2));
  }
  return normalized(v, 0.0);
}

double UnitQuaternion::angle() const {
  return 2.0 * std::atan2(vec_.norm(), std::abs(scalar_));
}

Mat4 omega_matrix(const Vec3& v) {
  Mat4 m;
  m.topLeftCorner<3, 3>() = -skew(v);
  m.topRightCorner<3, 1>() = v;
  m.bottomLeftCorner<1, 3>() = -v.transpose();
  m(3, 3) = 0.0;
  return m;
}

Vec4 quat_product_raw(const Vec4& mu, const Vec4& q) {
  // (mu_o I + Omega(mu_v)) q
  const Vec3 mv = mu.head<3>();
  const Vec3 qv = q.head<3>();
  Vec4 out;
  out.head<3>() = mu(3) * qv + q(3) * mv - mv.cross(qv);
  out(3) = mu(3) * q(3) - mv.dot(qv);
  return out;
}

Mat3 rotation_matrix(const UnitQuaternion& q) {
  const Mat3 s = skew(q.vec());
  return Mat3::Identity() + 2.0 * q.scalar() * s + 2.0 * s * s;
}

Mat3 rotation_matrix(const Vec3& vec, double scalar) {
  return rotation_matrix(UnitQuaternion::from_components(vec, scalar));
}

UnitQuaternion quat_product(const UnitQuaternion& mu, const UnitQuaternion& q) {
  return UnitQuaternion::normalized(quat_product_raw(mu.coeffs(), q.coeffs()));
}

UnitQuaternion quat_inverse(const UnitQuaternion& q) {
  return UnitQuaternion::normalized(-q.vec(), q.scalar());
}

UnitQuaternion quat_error(const UnitQuaternion& q, const UnitQuaternion& q_hat) {
  return quat_product(q, quat_inverse(q_hat));
}

UnitQuaternion quat_step(const UnitQuaternion& q, const Vec3& omega, double dt) {
  const double rate = omega.norm();
  if (rate == 0.0 || dt == 0.0) {
    return q;
  }
  const double half = 0.5 * rate * dt;
  const Vec4 step_coeffs = (Vec4() << omega / rate * std::sin(half), std::cos(half)).finished();
  return UnitQuaternion::normalized(quat_product_raw(step_coeffs, q.coeffs()));
}

double angle_between(const UnitQuaternion& a, const UnitQuaternion& b) {
  return quat_error(a, b).angle();
}

}  // namespace vservo
