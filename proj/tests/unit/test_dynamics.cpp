#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "vservo/dynamics.hpp"
#include "vservo/errors.hpp"

using namespace vservo;
using namespace vservo::testing;

TEST_CASE("sigma_from_inertia") {
  const InertiaParams sphere = sigma_from_inertia(1, 1, 1);
  CHECK(sphere.s1 == 0.0);
  CHECK(sphere.s2 == 0.0);
  CHECK(sphere.sigma3() == 0.0);

  const InertiaParams s = sigma_from_inertia(2, 3, 4);
  CHECK(s.s1 == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(s.s2 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.sigma3() == doctest::Approx(-0.25).epsilon(1e-15));

  CHECK_THROWS_AS(sigma_from_inertia(1, 1, 3), InvalidArgument);
  CHECK_THROWS_AS(sigma_from_inertia(1, 1, 2), InvalidArgument);
  CHECK_THROWS_AS(sigma_from_inertia(0, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(sigma_from_inertia(-1, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(InertiaParams::checked(1.0, 0.0), InvalidArgument);
}

TEST_CASE("gamma_residual") {
  CHECK(gamma_residual(0, 0, 0) == 0.0);
  CHECK(std::abs(gamma_residual(-0.5, 2.0 / 3.0, -0.25)) < 1e-15);
  CHECK(gamma_residual(0.5, 0.5, 0.5) == doctest::Approx(1.625));
}

TEST_CASE("inertia ratios over random valid triples") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.5, 5.0);
  int accepted = 0;
  while (accepted < 1000) {
    const double a = u(rng), b = u(rng), c = u(rng);
    if (!(a + b > c && a + c > b && b + c > a)) continue;
    InertiaParams s;
    try {
      s = sigma_from_inertia(a, b, c);
    } catch (const InvalidArgument&) {
      continue;
    }
    ++accepted;
    CHECK(std::abs(s.s1) < 1.0);
    CHECK(std::abs(s.s2) < 1.0);
    CHECK(std::abs(s.sigma3()) < 1.0);
    CHECK(std::abs(gamma_residual(s.s1, s.s2, s.sigma3())) < 1e-12);
    const EulerTerms et = euler_terms(Vec3::Zero(), s);
    const double tr = a + b + c;
    CHECK(et.B(0, 0) == doctest::Approx(tr / a).epsilon(1e-12));
    CHECK(et.B(1, 1) == doctest::Approx(tr / b).epsilon(1e-12));
    CHECK(et.B(2, 2) == doctest::Approx(tr / c).epsilon(1e-12));
  }
}

TEST_CASE("euler_terms") {
  const InertiaParams s = sigma_from_inertia(2, 3, 4);
  CHECK(euler_terms(Vec3::Zero(), s).phi.norm() == 0.0);
  const EulerTerms et = euler_terms(Vec3(0.3, -0.2, 0.5), s);
  CHECK((et.B.diagonal() - Vec3(4.5, 3.0, 2.25)).norm() < 1e-14);
  CHECK((et.B - Mat3(et.B.diagonal().asDiagonal())).norm() == 0.0);

  const EulerTerms sph = euler_terms(Vec3(1, -2, 3), InertiaParams{});
  CHECK(sph.phi.norm() == 0.0);
  CHECK((sph.B - 3.0 * Mat3::Identity()).norm() < 1e-15);
}

TEST_CASE("process_derivative") {
  TargetState x;
  x.sigma = sigma_from_inertia(2, 3, 4);
  const StateRate rest = process_derivative(x);
  CHECK(rest.q_dot.norm() == 0.0);
  CHECK(rest.omega_dot.norm() == 0.0);
  CHECK(rest.rho_o_dot.norm() == 0.0);
  CHECK(rest.rho_o_ddot.norm() == 0.0);

  x.omega = Vec3(1, 1, 0);
  const StateRate f = process_derivative(x);
  CHECK((f.omega_dot - Vec3(0, 0, -0.25)).norm() < 1e-15);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    ProcessNoise eps;
    eps.eps_tau = random_vec(rng, 1.0);
    eps.eps_f = random_vec(rng, 1.0);
    const StateRate r = process_derivative(random_state(rng), eps);
    CHECK(r.sigma_dot.norm() == 0.0);
    CHECK(r.varrho_dot.norm() == 0.0);
    CHECK(r.mu_v_dot.norm() == 0.0);
  }
}

TEST_CASE("jacobians match finite differences") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 50; ++i) {
    const TargetState x = random_state(rng);
    const Linearization lin = jacobians(x);
    CHECK(relative_error(lin.F, numeric_F(x)) < 1e-5);
  }
}

TEST_CASE("jacobian structure") {
  std::mt19937_64 rng(14);
  TargetState x = random_state(rng);
  x.omega.setZero();
  CHECK(dphi_domega(x.omega, x.sigma).norm() == 0.0);
  CHECK(dphi_dsigma(x.omega, x.sigma).norm() == 0.0);
  CHECK(jacobians(x).F.block<20, 2>(0, idx::sigma).norm() == 0.0);

  const Mat20x6 G = jacobians(random_state(rng)).G;
  for (int r = 0; r < idx::kDim; ++r) {
    const bool allowed = (r >= idx::omega && r < idx::omega + 3) || (r >= idx::rho_dot && r < idx::rho_dot + 3);
    if (!allowed) CHECK(G.row(r).norm() == 0.0);
  }
  CHECK(G.block<3, 3>(idx::omega, 0).norm() > 0.0);
  CHECK((G.block<3, 3>(idx::rho_dot, 3) - Mat3::Identity()).norm() == 0.0);
}

TEST_CASE("propagate") {
  TargetState x;
  x.rho_o_dot = Vec3(0.1, -0.2, 0.05);
  const TargetState y = propagate(x, 2.5);
  CHECK((y.rho_o - 2.5 * x.rho_o_dot).norm() < 1e-15);
  CHECK((y.q.coeffs() - x.q.coeffs()).norm() == 0.0);
  CHECK_THROWS_AS(propagate(x, -1.0), InvalidArgument);

  // Sphere: constant rate.
  x.omega = Vec3(0.3, -0.4, 0.2);
  CHECK((propagate(x, 10.0).omega - x.omega).norm() < 1e-15);

  std::mt19937_64 rng(15);
  for (int i = 0; i < 3; ++i) {
    const TargetState s = random_state(rng);
    const TargetState coarse = propagate(s, 10.0);
    const TargetState fine = propagate(s, 10.0, 1e-5);
    CHECK((coarse.omega - fine.omega).norm() < 1e-8);
    CHECK(angle_between(coarse.q, fine.q) < 1e-8);
    CHECK(std::abs(coarse.q.coeffs().norm() - 1.0) < 1e-12);
    CHECK(coarse.sigma.s1 == s.sigma.s1);
    CHECK(coarse.sigma.s2 == s.sigma.s2);
    CHECK(coarse.varrho == s.varrho);
    CHECK(coarse.mu.coeffs() == s.mu.coeffs());
  }
}

TEST_CASE("discretize") {
  std::mt19937_64 rng(16);
  const Mat6 Qc = Mat6::Identity() * 1e-3;
  const Mat20x6 G = jacobians(random_state(rng)).G;
  const Discretization zero = discretize(Mat20::Zero(), G, Qc, 0.1);
  CHECK((zero.Phi - Mat20::Identity()).norm() == 0.0);

  const Discretization a = discretize(Mat20::Zero(), G, Qc, 0.2);
  const Discretization b = discretize(Mat20::Zero(), G, Qc, 0.1);
  CHECK((a.Qk - 2.0 * b.Qk).cwiseAbs().maxCoeff() < 1e-18);
  CHECK((a.Qk - a.Qk.transpose()).norm() == 0.0);

  for (int i = 0; i < 20; ++i) {
    const Mat20 F = jacobians(random_state(rng)).F;
    const double dt = 0.09 / F.norm();
    const Mat20 Fdt = F * dt;
    Mat20 taylor = Mat20::Identity();
    Mat20 term = Mat20::Identity();
    for (int k = 1; k <= 10; ++k) {
      term = term * Fdt / k;
      taylor += term;
    }
    CHECK((discretize(F, G, Qc, dt).Phi - taylor).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("retract and local are inverse") {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const TargetState ref = random_state(rng);
    Vec20 d;
    for (int j = 0; j < 20; ++j) d(j) = 0.01 * std::sin(3.0 * j + i);
    CHECK((local(retract(ref, d), ref) - d).norm() < 1e-14);
  }
}
