#pragma once

// Random states and finite-difference references shared by the unit tests
// and the acceptance suite.

#include <random>
#include <vector>

#include "vservo/dynamics.hpp"
#include "vservo/estimator.hpp"
#include "vservo/quaternion.hpp"

namespace vservo::testing {

inline UnitQuaternion random_quaternion(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return UnitQuaternion::normalized(Vec3(n(rng), n(rng), n(rng)), n(rng));
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  return {n(rng), n(rng), n(rng)};
}

/// Inertia from a random valid triple (not too close to the triangle
/// boundary).
inline InertiaParams random_inertia(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(1.0, 3.0);
  for (;;) {
    const double a = u(rng), b = u(rng), c = u(rng);
    if (a + b > 1.05 * c && a + c > 1.05 * b && b + c > 1.05 * a) return sigma_from_inertia(a, b, c);
  }
}

inline TargetState random_state(std::mt19937_64& rng) {
  TargetState x;
  x.q = random_quaternion(rng);
  x.omega = random_vec(rng, 0.5);
  x.rho_o = random_vec(rng, 1.0) + Vec3(0, 0, 3);
  x.rho_o_dot = random_vec(rng, 0.05);
  x.sigma = random_inertia(rng);
  x.varrho = random_vec(rng, 0.3);
  x.mu = random_quaternion(rng);
  return x;
}

/// Exact error-state rate d/dt local(x, x_hat) with both states moving under
/// the noise-free dynamics.
inline Vec20 error_rate(const TargetState& x, const TargetState& x_hat) {
  const StateRate f = process_derivative(x);
  const StateRate fh = process_derivative(x_hat);
  auto conj = [](const Vec4& v) {
    Vec4 c = v;
    c.head<3>() *= -1.0;
    return c;
  };
  const Vec4 dq = quat_product_raw(f.q_dot, conj(x_hat.q.coeffs())) +
                  quat_product_raw(x.q.coeffs(), conj(fh.q_dot));
  Vec20 r = Vec20::Zero();
  r.segment<3>(idx::q) = dq.head<3>();
  r.segment<3>(idx::omega) = f.omega_dot - fh.omega_dot;
  r.segment<3>(idx::rho) = f.rho_o_dot - fh.rho_o_dot;
  r.segment<3>(idx::rho_dot) = f.rho_o_ddot - fh.rho_o_ddot;
  return r;
}

inline Mat20 numeric_F(const TargetState& x_hat, double h = 1e-6) {
  Mat20 F;
  for (int j = 0; j < idx::kDim; ++j) {
    Vec20 d = Vec20::Zero();
    d(j) = h;
    F.col(j) = (error_rate(retract(x_hat, d), x_hat) - error_rate(retract(x_hat, -d), x_hat)) / (2.0 * h);
  }
  return F;
}

/// Measurement that a perfect registration would report for the state x,
/// expressed against the reference estimate.
inline Vec6 ideal_measurement(const TargetState& x, const Estimate& ref) {
  return measurement_vector(x.grasp_position(), x.grasp_attitude(), ref);
}

inline Mat6x20 numeric_H(const Estimate& ref, double h = 1e-6) {
  Mat6x20 H;
  for (int j = 0; j < idx::kDim; ++j) {
    Vec20 d = Vec20::Zero();
    d(j) = h;
    H.col(j) = (ideal_measurement(retract(ref.x, d), ref) - ideal_measurement(retract(ref.x, -d), ref)) /
               (2.0 * h);
  }
  return H;
}

/// Random surface samples of an 0.8 x 0.5 x 0.3 m box plus an off-axis
/// boom; no symmetries, so registration has a unique optimum.
inline std::vector<Vec3> asymmetric_model(int n = 12) {
  std::mt19937_64 rng(20261016);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> pts;
  const Vec3 half(0.4, 0.25, 0.15);
  const int per_face = 2 * n * n;
  for (int axis = 0; axis < 3; ++axis) {
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    for (double side : {-1.0, 1.0})
      for (int i = 0; i < per_face; ++i) {
        Vec3 p;
        p(axis) = side * half(axis);
        p(a) = half(a) * u(rng);
        p(b) = half(b) * u(rng);
        pts.push_back(p);
      }
  }
  for (int i = 0; i < 8 * n; ++i) {
    const double t = 0.5 * (1.0 + u(rng));
    pts.emplace_back(0.4 + 0.35 * t, 0.1 + 0.2 * t, 0.15 + 0.1 * t);
  }
  return pts;
}

/// max |A - B| / max(1, max |B|).
template <typename M>
double relative_error(const M& A, const M& B) {
  return (A - B).cwiseAbs().maxCoeff() / std::max(1.0, B.cwiseAbs().maxCoeff());
}

}  // namespace vservo::testing
