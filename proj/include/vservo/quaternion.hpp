#pragma once

// Unit quaternions stored as [vec; scalar].
//
// The composition mu (x) q = (mu_o I + Omega(mu_v)) q places the left operand
// in the body-side slot, so A(mu (x) q) = A(q) A(mu) with
// A(eta) = I + 2 eta_o [eta_v x] + 2 [eta_v x]^2.  Orientation of a frame
// attached to the target is therefore composed as  eta = mu (x) q.

#include "vservo/types.hpp"

namespace vservo {

class UnitQuaternion {
 public:
  /// Identity rotation.
  UnitQuaternion() : vec_(Vec3::Zero()), scalar_(1.0) {}

  static UnitQuaternion identity() { return {}; }

  /// Accepts components whose norm is 1 within 1e-9, renormalizes them and
  /// flips the sign so the scalar part is non-negative.  Throws
  /// InvalidArgument otherwise.
  static UnitQuaternion from_components(const Vec3& vec, double scalar);

  /// Normalizes any non-zero 4-vector.
  static UnitQuaternion normalized(const Vec3& vec, double scalar);
  static UnitQuaternion normalized(const Vec4& coeffs) {
    return normalized(coeffs.head<3>(), coeffs(3));
  }

  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);

  /// Small-rotation quaternion [v; sqrt(1 - |v|^2)]; v with |v| >= 1 is
  /// treated as [v; 0] and normalized.
  static UnitQuaternion from_vector_part(const Vec3& v);

  const Vec3& vec() const { return vec_; }
  double scalar() const { return scalar_; }
  Vec4 coeffs() const {
    Vec4 c;
    c << vec_, scalar_;
    return c;
  }

  /// Rotation angle in [0, pi].
  double angle() const;

 private:
  UnitQuaternion(const Vec3& vec, double scalar) : vec_(vec), scalar_(scalar) {}
  static UnitQuaternion canonical(Vec3 vec, double scalar);

  Vec3 vec_;
  double scalar_;
};

/// 4x4 operator Omega(v) = [[-[v x], v], [-v^T, 0]].
Mat4 omega_matrix(const Vec3& v);

/// Bilinear product on raw 4-vectors ([vec; scalar]); no normalization.
Vec4 quat_product_raw(const Vec4& mu, const Vec4& q);

Mat3 rotation_matrix(const UnitQuaternion& q);
/// Raw-component overload; throws InvalidArgument if the norm is off by
/// more than 1e-9.
Mat3 rotation_matrix(const Vec3& vec, double scalar);

UnitQuaternion quat_product(const UnitQuaternion& mu, const UnitQuaternion& q);
UnitQuaternion quat_inverse(const UnitQuaternion& q);

/// delta_q = q (x) q_hat^-1, scalar part non-negative.
UnitQuaternion quat_error(const UnitQuaternion& q, const UnitQuaternion& q_hat);

/// Exact integration of q_dot = 1/2 Omega(omega) q over dt for constant omega.
UnitQuaternion quat_step(const UnitQuaternion& q, const Vec3& omega, double dt);

/// Angle of the rotation taking b to a.
double angle_between(const UnitQuaternion& a, const UnitQuaternion& b);

}  // namespace vservo
