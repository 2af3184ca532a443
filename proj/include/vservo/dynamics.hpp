#pragma once

// Torque-free tumbling target written in the two independent dimensionless
// inertia ratios (sigma1, sigma2).  The third ratio follows from
// Gamma(sigma) = s1 + s2 + s3 + s1 s2 s3 = 0.

#include "vservo/quaternion.hpp"
#include "vservo/types.hpp"

namespace vservo {

struct InertiaParams {
  double s1 = 0.0;
  double s2 = 0.0;

  /// Throws InvalidArgument unless |s1| < 1 and |s2| < 1.
  static InertiaParams checked(double s1, double s2);

  double sigma3() const { return -(s1 + s2) / (1.0 + s1 * s2); }
  bool interior() const;
  Vec2 vec() const { return {s1, s2}; }
};

/// sigma1 = (Iyy - Izz)/Ixx, sigma2 = (Izz - Ixx)/Iyy.  Rejects non-positive
/// moments and triples within 1e-9 (relative to the trace) of violating a
/// triangle inequality.
InertiaParams sigma_from_inertia(double Ixx, double Iyy, double Izz);

double gamma_residual(double sigma1, double sigma2, double sigma3);

struct EulerTerms {
  Vec3 phi;  ///< gyroscopic angular acceleration, rad/s^2
  Mat3 B;    ///< diag(tr(I)/I_ii), maps eps_tau into angular acceleration
};

EulerTerms euler_terms(const Vec3& omega, const InertiaParams& sigma);
Mat3 dphi_domega(const Vec3& omega, const InertiaParams& sigma);
Eigen::Matrix<double, 3, 2> dphi_dsigma(const Vec3& omega, const InertiaParams& sigma);

struct TargetState {
  UnitQuaternion q;           ///< body {B} w.r.t. camera {A}
  Vec3 omega = Vec3::Zero();  ///< body rate, rad/s
  Vec3 rho_o = Vec3::Zero();  ///< CoM position in {A}, m
  Vec3 rho_o_dot = Vec3::Zero();
  InertiaParams sigma;
  Vec3 varrho = Vec3::Zero();  ///< grasp point offset in {B}, m
  UnitQuaternion mu;           ///< grasp frame {C} relative to {B}

  /// Grasp frame pose in {A}: rho = rho_o + A(q) varrho, eta = mu (x) q.
  Vec3 grasp_position() const;
  Vec3 grasp_velocity() const;
  UnitQuaternion grasp_attitude() const;
};

/// eps = [eps_tau; eps_f]; eps_tau = tau / tr(I_c).
struct ProcessNoise {
  Vec3 eps_tau = Vec3::Zero();
  Vec3 eps_f = Vec3::Zero();
};

struct StateRate {
  Vec4 q_dot = Vec4::Zero();
  Vec3 omega_dot = Vec3::Zero();
  Vec3 rho_o_dot = Vec3::Zero();
  Vec3 rho_o_ddot = Vec3::Zero();
  Vec2 sigma_dot = Vec2::Zero();
  Vec3 varrho_dot = Vec3::Zero();
  Vec3 mu_v_dot = Vec3::Zero();
};

StateRate process_derivative(const TargetState& x, const ProcessNoise& eps = {});

struct Linearization {
  Mat20 F;
  Mat20x6 G;
};

/// Error-state Jacobians about x_hat (attitude error delta_q = q (x) q_hat^-1).
Linearization jacobians(const TargetState& x_hat);

/// Noise-free RK4 propagation; substeps no longer than max_step, quaternion
/// renormalized after every substep.  Parameters are carried unchanged.
TargetState propagate(const TargetState& x, double dt, double max_step = 5e-3);

struct Discretization {
  Mat20 Phi;
  Mat20 Qk;
};

/// Phi = exp(F dt), Qk = G Qc G^T dt.
Discretization discretize(const Mat20& F, const Mat20x6& G, const Mat6& Qc, double dt);

/// x = ref [+] dx.  q = dq (x) q_ref, mu = mu_ref (x) dmu, the rest additive.
TargetState retract(const TargetState& ref, const Vec20& dx);

/// Inverse of retract: dx = x [-] ref.
Vec20 local(const TargetState& x, const TargetState& ref);

}  // namespace vservo
