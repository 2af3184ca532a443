#pragma once

// Multiplicative error-state EKF over the 20-dimensional tumbling-target state
// with gain projection on the inertia ratios, vision-fault gating,
// residual-window adaptation of the measurement covariance and an
// observability Gramian accumulator.

#include <cstddef>
#include <deque>
#include <limits>

#include "vservo/dynamics.hpp"
#include "vservo/types.hpp"

namespace vservo {

struct Estimate {
  TargetState x;
  Mat20 P = Mat20::Identity();
  long epoch = 0;
  double time = 0.0;  ///< s
};

/// Block-diagonal initial covariance (variances per error block).
struct InitialCovariance {
  double attitude = 1e-2;
  double rate = 1e-2;
  double position = 1e-1;
  double velocity = 1e-2;
  double sigma = 0.25;
  double varrho = 1e-2;
  double mu = 1e-2;

  Mat20 matrix() const;
};

struct NoiseModel {
  Mat6 Qc = Mat6::Zero();     ///< continuous density of [eps_tau; eps_f]
  Mat6 R_hat = Mat6::Zero();  ///< current measurement covariance
  Mat6 Sigma = Mat6::Zero();  ///< windowed residual second moment
  std::deque<Vec6> window;    ///< last w residuals, oldest first
  std::size_t w = 100;
  std::size_t samples = 0;    ///< residuals folded in so far

  static NoiseModel make(const Mat6& Qc, const Mat6& R0, std::size_t w);
};

/// x^- by RK4 propagation, P^- = Phi P^+ Phi^T + Q_k.  Writes the transition
/// matrix to *Phi when requested.
Estimate predict(const Estimate& est, const NoiseModel& noise, double dt, Mat20* Phi = nullptr);

struct MeasurementModel {
  Vec6 z_pred;
  Mat6x20 H;
};

/// h(0) and its sensitivity about the current reference (error state zero).
MeasurementModel measurement_model(const Estimate& est);

/// Sensitivity matrix for a non-zero error-state estimate (dq_v, dmu_v).
Mat6x20 sensitivity(const TargetState& x_hat, const Vec3& dq_v, const Vec3& dmu_v);

/// z = [rho_bar; vec(mu_hat^-1 (x) eta_bar (x) q_hat^-1)].
Vec6 measurement_vector(const Vec3& rho_bar, const UnitQuaternion& eta_bar, const Estimate& est);

enum class GainProjection {
  Boundary,  ///< project the violating posterior onto |sigma_i| = 1 - margin
  Printed,   ///< beta = sgn(k^T e) - sigma / (k^T e) when |k^T e| > 1
  None,
};

inline constexpr double kSigmaMargin = 1e-6;

/// Scales the two sigma rows of the unconstrained gain so the posterior
/// inertia ratios stay inside the box.
Mat20x6 gain_projection(const Mat20x6& Ku, const Vec2& sigma_prior, const Vec6& e,
                        GainProjection mode = GainProjection::Boundary);

struct UpdateOutcome {
  Estimate posterior;
  bool applied = false;
  Vec6 innovation = Vec6::Zero();
  Vec20 correction = Vec20::Zero();  ///< delta_x^+ before the reset
  Mat6 S = Mat6::Zero();
  Mat6x20 H = Mat6x20::Zero();
  Mat20x6 K = Mat20x6::Zero();
};

/// gamma = 0 returns the prior untouched.  Throws DegradedUpdate when the
/// innovation covariance condition number exceeds 1e12.
UpdateOutcome update(const Estimate& est, const Vec6& z, int gamma, const NoiseModel& noise,
                     GainProjection mode = GainProjection::Boundary);

/// Post-fit residual e = z - h(0) - H delta_x^+.
Vec6 post_fit_residual(const UpdateOutcome& out);

/// Folds one residual into the window and refreshes R_hat = Sigma + H P H^T
/// (symmetrized, eigenvalues floored at 1e-12).
NoiseModel adapt_R(NoiseModel noise, const Vec6& e, const Mat6x20& H, const Mat20& P_post);

/// Plain average over the stored window; reference for the recursive form.
Mat6 batch_window_covariance(const NoiseModel& noise);

class GramianTracker {
 public:
  GramianTracker() : W_(Mat20::Zero()), Phi_prod_(Mat20::Identity()) {}

  void step(const Mat20& Phi_k, const Mat6x20& H_k);

  const Mat20& gramian() const { return W_; }
  const Mat20& transition_product() const { return Phi_prod_; }
  std::size_t steps() const { return steps_; }

  /// Eigenvalues in ascending order.
  Vec20 eigenvalues() const;
  /// lambda_max / lambda_min; +inf when lambda_min <= 0.
  double condition_number() const;

 private:
  Mat20 W_;
  Mat20 Phi_prod_;
  std::size_t steps_ = 0;
};

GramianTracker gramian_step(GramianTracker tracker, const Mat20& Phi_k, const Mat6x20& H_k);

/// Trace of the parameter block (sigma, varrho, mu_v) below threshold.
bool converged(const Estimate& est, double threshold);

/// Latches the first convergence time t1.
class ConvergenceLatch {
 public:
  explicit ConvergenceLatch(double threshold) : threshold_(threshold) {}

  bool observe(const Estimate& est);
  bool latched() const { return latched_; }
  double t1() const { return t1_; }

 private:
  double threshold_;
  bool latched_ = false;
  double t1_ = std::numeric_limits<double>::quiet_NaN();
};

/// Per-block traces of P in state order (q, omega, rho, rho_dot, sigma, varrho, mu).
Eigen::Matrix<double, 7, 1> block_traces(const Mat20& P);

}  // namespace vservo
