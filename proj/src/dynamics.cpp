#include "vservo/dynamics.hpp"

#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "vservo/errors.hpp"

namespace vservo {

InertiaParams InertiaParams::checked(double s1, double s2) {
  InertiaParams p{s1, s2};
  if (!p.interior()) {
    throw InvalidArgument("inertia ratios must lie inside the open unit box");
  }
  return p;
}

bool InertiaParams::interior() const {
  return std::isfinite(s1) && std::isfinite(s2) && std::abs(s1) < 1.0 && std::abs(s2) < 1.0;
}

InertiaParams sigma_from_inertia(double Ixx, double Iyy, double Izz) {
  if (!(Ixx > 0.0 && Iyy > 0.0 && Izz > 0.0)) {
    throw InvalidArgument("principal moments of inertia must be positive");
  }
  const double margin = 1e-9 * (Ixx + Iyy + Izz);
  if (Ixx + Iyy - Izz <= margin || Iyy + Izz - Ixx <= margin || Izz + Ixx - Iyy <= margin) {
    throw InvalidArgument("principal moments violate the triangle inequality");
  }
  return InertiaParams{(Iyy - Izz) / Ixx, (Izz - Ixx) / Iyy};
}

double gamma_residual(double sigma1, double sigma2, double sigma3) {
  return sigma1 + sigma2 + sigma3 + sigma1 * sigma2 * sigma3;
}

EulerTerms euler_terms(const Vec3& w, const InertiaParams& sigma) {
  const double s1 = sigma.s1;
  const double s2 = sigma.s2;
  const double s12 = 1.0 + s1 * s2;
  EulerTerms t;
  t.phi << s1 * w.y() * w.z(), s2 * w.x() * w.z(), -(s1 + s2) / s12 * w.x() * w.y();
  t.B = Mat3::Identity();
  t.B(0, 0) += (2.0 + s1 * s2 + s1) / (1.0 - s2);
  t.B(1, 1) += (2.0 + s1 * s2 - s2) / (1.0 + s1);
  t.B(2, 2) += (2.0 + s1 - s2) / s12;
  return t;
}

Mat3 dphi_domega(const Vec3& w, const InertiaParams& sigma) {
  const double s1 = sigma.s1;
  const double s2 = sigma.s2;
  const double s3 = sigma.sigma3();
  Mat3 d;
  d << 0.0, s1 * w.z(), s1 * w.y(),
       s2 * w.z(), 0.0, s2 * w.x(),
       s3 * w.y(), s3 * w.x(), 0.0;
  return d;
}

Eigen::Matrix<double, 3, 2> dphi_dsigma(const Vec3& w, const InertiaParams& sigma) {
  const double s1 = sigma.s1;
  const double s2 = sigma.s2;
  const double den = (1.0 + s1 * s2) * (1.0 + s1 * s2);
  Eigen::Matrix<double, 3, 2> d;
  d << w.y() * w.z(), 0.0,
       0.0, w.x() * w.z(),
       (s2 * s2 - 1.0) / den * w.x() * w.y(), (s1 * s1 - 1.0) / den * w.x() * w.y();
  return d;
}

Vec3 TargetState::grasp_position() const { return rho_o + rotation_matrix(q) * varrho; }

Vec3 TargetState::grasp_velocity() const {
  return rho_o_dot + rotation_matrix(q) * omega.cross(varrho);
}

UnitQuaternion TargetState::grasp_attitude() const { return quat_product(mu, q); }

StateRate process_derivative(const TargetState& x, const ProcessNoise& eps) {
  const EulerTerms e = euler_terms(x.omega, x.sigma);
  StateRate r;
  r.q_dot = 0.5 * omega_matrix(x.omega) * x.q.coeffs();
  r.omega_dot = e.phi + e.B * eps.eps_tau;
  r.rho_o_dot = x.rho_o_dot;
  r.rho_o_ddot = eps.eps_f;
  return r;
}

Linearization jacobians(const TargetState& x) {
  Linearization lin;
  lin.F.setZero();
  lin.G.setZero();
  lin.F.block<3, 3>(idx::q, idx::q) = -skew(x.omega);
  lin.F.block<3, 3>(idx::q, idx::omega) = 0.5 * Mat3::Identity();
  lin.F.block<3, 3>(idx::omega, idx::omega) = dphi_domega(x.omega, x.sigma);
  lin.F.block<3, 2>(idx::omega, idx::sigma) = dphi_dsigma(x.omega, x.sigma);
  lin.F.block<3, 3>(idx::rho, idx::rho_dot) = Mat3::Identity();
  lin.G.block<3, 3>(idx::omega, 0) = euler_terms(x.omega, x.sigma).B;
  lin.G.block<3, 3>(idx::rho_dot, 3) = Mat3::Identity();
  return lin;
}

namespace {

// Dynamic part of the state: q (4), omega, rho_o, rho_o_dot.
using Dyn = Eigen::Matrix<double, 13, 1>;

Dyn dyn_rate(const Dyn& y, const InertiaParams& sigma) {
  const Vec3 w = y.segment<3>(4);
  Dyn d;
  d.head<4>() = 0.5 * omega_matrix(w) * y.head<4>();
  d.segment<3>(4) = euler_terms(w, sigma).phi;
  d.segment<3>(7) = y.segment<3>(10);
  d.segment<3>(10).setZero();
  return d;
}

void renormalize(Dyn& y) { y.head<4>() /= y.head<4>().norm(); }

}  // namespace

TargetState propagate(const TargetState& x, double dt, double max_step) {
  if (!(dt > 0.0)) {
    if (dt == 0.0) {
      return x;
    }
    throw InvalidArgument("propagate: dt must be positive");
  }
  const int n = std::max(1, static_cast<int>(std::ceil(dt / max_step - 1e-12)));
  const double h = dt / n;
  Dyn y;
  y << x.q.coeffs(), x.omega, x.rho_o, x.rho_o_dot;
  for (int i = 0; i < n; ++i) {
    const Dyn k1 = dyn_rate(y, x.sigma);
    const Dyn k2 = dyn_rate(y + 0.5 * h * k1, x.sigma);
    const Dyn k3 = dyn_rate(y + 0.5 * h * k2, x.sigma);
    const Dyn k4 = dyn_rate(y + h * k3, x.sigma);
    y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    renormalize(y);
  }
  TargetState out = x;
  out.q = UnitQuaternion::normalized(y.head<4>());
  out.omega = y.segment<3>(4);
  out.rho_o = y.segment<3>(7);
  out.rho_o_dot = y.segment<3>(10);
  return out;
}

Discretization discretize(const Mat20& F, const Mat20x6& G, const Mat6& Qc, double dt) {
  if (!(dt > 0.0)) {
    throw InvalidArgument("discretize: dt must be positive");
  }
  Discretization d;
  const Eigen::MatrixXd Fdt = F * dt;
  d.Phi = Fdt.exp();
  d.Qk = G * Qc * G.transpose() * dt;
  d.Qk = 0.5 * (d.Qk + d.Qk.transpose()).eval();
  return d;
}

TargetState retract(const TargetState& ref, const Vec20& dx) {
  TargetState x = ref;
  x.q = quat_product(UnitQuaternion::from_vector_part(dx.segment<3>(idx::q)), ref.q);
  x.omega += dx.segment<3>(idx::omega);
  x.rho_o += dx.segment<3>(idx::rho);
  x.rho_o_dot += dx.segment<3>(idx::rho_dot);
  x.sigma.s1 += dx(idx::sigma);
  x.sigma.s2 += dx(idx::sigma + 1);
  x.varrho += dx.segment<3>(idx::varrho);
  x.mu = quat_product(ref.mu, UnitQuaternion::from_vector_part(dx.segment<3>(idx::mu)));
  return x;
}

Vec20 local(const TargetState& x, const TargetState& ref) {
  Vec20 dx;
  dx.segment<3>(idx::q) = quat_error(x.q, ref.q).vec();
  dx.segment<3>(idx::omega) = x.omega - ref.omega;
  dx.segment<3>(idx::rho) = x.rho_o - ref.rho_o;
  dx.segment<3>(idx::rho_dot) = x.rho_o_dot - ref.rho_o_dot;
  dx(idx::sigma) = x.sigma.s1 - ref.sigma.s1;
  dx(idx::sigma + 1) = x.sigma.s2 - ref.sigma.s2;
  dx.segment<3>(idx::varrho) = x.varrho - ref.varrho;
  dx.segment<3>(idx::mu) = quat_product(quat_inverse(ref.mu), x.mu).vec();
  return dx;
}

}  // namespace vservo
