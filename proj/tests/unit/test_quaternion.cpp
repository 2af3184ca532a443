#include "doctest.h"

#include <cmath>

#include "fixtures.hpp"
#include "vservo/errors.hpp"
#include "vservo/quaternion.hpp"

using namespace vservo;
using vservo::testing::random_quaternion;

namespace {
const double kH = std::sqrt(2.0) / 2.0;

double qdist(const UnitQuaternion& a, const UnitQuaternion& b) {
  return std::min((a.coeffs() - b.coeffs()).norm(), (a.coeffs() + b.coeffs()).norm());
}
}  // namespace

TEST_CASE("rotation_matrix examples") {
  CHECK((rotation_matrix(UnitQuaternion()) - Mat3::Identity()).norm() == 0.0);
  const UnitQuaternion z90 = UnitQuaternion::from_components(Vec3(0, 0, kH), kH);
  CHECK((rotation_matrix(z90) * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-15);
  CHECK_THROWS_AS(rotation_matrix(Vec3(0, 0, 0.5), 0.5), InvalidArgument);
  CHECK_THROWS_AS(UnitQuaternion::from_components(Vec3(0.1, 0, 0), 1.0), InvalidArgument);
}

TEST_CASE("rotation matrices are proper orthonormal") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Mat3 A = rotation_matrix(random_quaternion(rng));
    CHECK((A * A.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(A.determinant() - 1.0) < 1e-12);
  }
}

TEST_CASE("composition reverses under A") {
  // mu (x) q = (mu_o I + Omega(mu_v)) q composes as A(mu (x) q) = A(q) A(mu).
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const UnitQuaternion a = random_quaternion(rng);
    const UnitQuaternion b = random_quaternion(rng);
    const Mat3 lhs = rotation_matrix(quat_product(a, b));
    CHECK((lhs - rotation_matrix(b) * rotation_matrix(a)).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("quat_product") {
  std::mt19937_64 rng(3);
  const UnitQuaternion q = random_quaternion(rng);
  CHECK(qdist(quat_product(UnitQuaternion(), q), q) < 1e-15);
  CHECK(qdist(quat_product(q, quat_inverse(q)), UnitQuaternion()) < 1e-15);
  const UnitQuaternion z90 = UnitQuaternion::from_components(Vec3(0, 0, kH), kH);
  const UnitQuaternion z180 = quat_product(z90, z90);
  CHECK(qdist(z180, UnitQuaternion::from_components(Vec3(0, 0, 1), 0)) < 1e-15);
  CHECK(quat_product_raw(q.coeffs(), q.coeffs()).norm() == doctest::Approx(1.0));
  CHECK((omega_matrix(Vec3(1, 2, 3)) + omega_matrix(Vec3(1, 2, 3)).transpose()).norm() == 0.0);
}

TEST_CASE("quat_inverse") {
  CHECK(qdist(quat_inverse(UnitQuaternion()), UnitQuaternion()) == 0.0);
  const UnitQuaternion z90 = UnitQuaternion::from_components(Vec3(0, 0, kH), kH);
  const UnitQuaternion inv = quat_inverse(z90);
  CHECK(inv.vec().z() == doctest::Approx(-kH));
  CHECK(inv.scalar() == doctest::Approx(kH));
  std::mt19937_64 rng(4);
  for (int i = 0; i < 100; ++i) {
    const UnitQuaternion q = random_quaternion(rng);
    CHECK(qdist(quat_product(q, quat_inverse(q)), UnitQuaternion()) < 1e-15);
  }
}

TEST_CASE("quat_error") {
  std::mt19937_64 rng(5);
  const UnitQuaternion q_hat = random_quaternion(rng);
  CHECK(qdist(quat_error(q_hat, q_hat), UnitQuaternion()) < 1e-15);

  const double deg = M_PI / 180.0;
  const UnitQuaternion q = quat_product(UnitQuaternion::from_axis_angle(Vec3::UnitZ(), deg), q_hat);
  const UnitQuaternion dq = quat_error(q, q_hat);
  CHECK((dq.vec() - Vec3(0, 0, std::sin(0.5 * deg))).norm() < 1e-15);
  CHECK(dq.scalar() >= 0.0);

  for (int i = 0; i < 100; ++i) {
    const UnitQuaternion a = random_quaternion(rng);
    const UnitQuaternion b = random_quaternion(rng);
    const UnitQuaternion e = quat_error(a, b);
    CHECK(e.scalar() >= 0.0);
    CHECK(qdist(quat_product(e, b), a) < 1e-14);
  }
}

TEST_CASE("quat_step") {
  std::mt19937_64 rng(6);
  const UnitQuaternion q = random_quaternion(rng);
  CHECK(qdist(quat_step(q, Vec3::Zero(), 0.3), q) == 0.0);

  const UnitQuaternion z90 = quat_step(UnitQuaternion(), Vec3(0, 0, M_PI / 2), 1.0);
  CHECK(qdist(z90, UnitQuaternion::from_components(Vec3(0, 0, kH), kH)) < 1e-15);

  for (int i = 0; i < 50; ++i) {
    const UnitQuaternion q0 = random_quaternion(rng);
    const Vec3 w = vservo::testing::random_vec(rng, 1.0);
    const double dt = 0.37;
    const UnitQuaternion full = quat_step(q0, w, dt);
    const UnitQuaternion halves = quat_step(quat_step(q0, w, dt / 2), w, dt / 2);
    CHECK(qdist(full, halves) < 1e-12);
    CHECK(angle_between(full, q0) == doctest::Approx(std::fmod(w.norm() * dt, 2 * M_PI)).epsilon(1e-10));
    CHECK(std::abs(full.coeffs().norm() - 1.0) < 1e-12);
  }
}

TEST_CASE("quaternions are canonical with unit norm") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 200; ++i) {
    const UnitQuaternion a = random_quaternion(rng);
    const UnitQuaternion b = random_quaternion(rng);
    for (const UnitQuaternion& r : {a, quat_product(a, b), quat_inverse(a), quat_error(a, b)}) {
      CHECK(std::abs(r.coeffs().norm() - 1.0) < 1e-12);
      CHECK(r.scalar() >= 0.0);
    }
  }
  const UnitQuaternion small = UnitQuaternion::from_vector_part(Vec3(0.1, 0.2, -0.1));
  CHECK(small.scalar() == doctest::Approx(std::sqrt(1 - 0.06)));
  CHECK(UnitQuaternion::from_axis_angle(Vec3(0, 0, 2), M_PI).angle() == doctest::Approx(M_PI));
}
