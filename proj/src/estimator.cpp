#include "vservo/estimator.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

#include "vservo/errors.hpp"

namespace vservo {

namespace {

template <int N>
Eigen::Matrix<double, N, N> symmetrize(const Eigen::Matrix<double, N, N>& m) {
  return 0.5 * (m + m.transpose());
}

Mat6 floor_psd(const Mat6& m, double floor) {
  Eigen::SelfAdjointEigenSolver<Mat6> es(symmetrize<6>(m));
  Vec6 ev = es.eigenvalues().cwiseMax(floor);
  Mat6 out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return symmetrize<6>(out);
}

}  // namespace

Mat20 InitialCovariance::matrix() const {
  Vec20 d;
  d.segment<3>(idx::q).setConstant(attitude);
  d.segment<3>(idx::omega).setConstant(rate);
  d.segment<3>(idx::rho).setConstant(position);
  d.segment<3>(idx::rho_dot).setConstant(velocity);
  d.segment<2>(idx::sigma).setConstant(sigma);
  d.segment<3>(idx::varrho).setConstant(varrho);
  d.segment<3>(idx::mu).setConstant(mu);
  return d.asDiagonal();
}

NoiseModel NoiseModel::make(const Mat6& Qc, const Mat6& R0, std::size_t w) {
  if (w == 0) {
    throw InvalidArgument("residual window must hold at least one sample");
  }
  NoiseModel n;
  n.Qc = Qc;
  n.R_hat = R0;
  n.w = w;
  return n;
}

Estimate predict(const Estimate& est, const NoiseModel& noise, double dt, Mat20* Phi) {
  const Linearization lin = jacobians(est.x);
  const Discretization d = discretize(lin.F, lin.G, noise.Qc, dt);
  Estimate out;
  out.x = propagate(est.x, dt);
  out.P = symmetrize<20>(d.Phi * est.P * d.Phi.transpose() + d.Qk);
  out.epoch = est.epoch;
  out.time = est.time + dt;
  if (Phi != nullptr) {
    *Phi = d.Phi;
  }
  return out;
}

Mat6x20 sensitivity(const TargetState& x, const Vec3& dq_v, const Vec3& dmu_v) {
  const Mat3 A = rotation_matrix(x.q);
  Mat6x20 H = Mat6x20::Zero();
  H.block<3, 3>(0, idx::q) = -2.0 * A * skew(x.varrho);
  H.block<3, 3>(0, idx::rho) = Mat3::Identity();
  H.block<3, 3>(0, idx::varrho) = A;
  H.block<3, 3>(3, idx::q) = Mat3::Identity() - skew(dmu_v);
  H.block<3, 3>(3, idx::mu) = Mat3::Identity() + skew(dq_v);
  return H;
}

MeasurementModel measurement_model(const Estimate& est) {
  MeasurementModel m;
  m.z_pred << est.x.grasp_position(), Vec3::Zero();
  m.H = sensitivity(est.x, Vec3::Zero(), Vec3::Zero());
  return m;
}

Vec6 measurement_vector(const Vec3& rho_bar, const UnitQuaternion& eta_bar, const Estimate& est) {
  const UnitQuaternion d_eta =
      quat_product(quat_product(quat_inverse(est.x.mu), eta_bar), quat_inverse(est.x.q));
  Vec6 z;
  z << rho_bar, d_eta.vec();
  return z;
}

Mat20x6 gain_projection(const Mat20x6& Ku, const Vec2& sigma_prior, const Vec6& e,
                        GainProjection mode) {
  Mat20x6 K = Ku;
  if (mode == GainProjection::None) {
    return K;
  }
  for (int i = 0; i < 2; ++i) {
    const int row = idx::sigma + i;
    const double ke = Ku.row(row).dot(e);
    const double s = sigma_prior(i);
    double beta = 1.0;
    if (mode == GainProjection::Boundary) {
      const double bound = 1.0 - kSigmaMargin;
      if (std::abs(s + ke) > bound && ke != 0.0) {
        beta = (std::copysign(bound, ke) - s) / ke;
      }
    } else if (std::abs(ke) > 1.0) {
      beta = std::copysign(1.0, ke) - s / ke;
    }
    K.row(row) *= beta;
  }
  return K;
}

UpdateOutcome update(const Estimate& est, const Vec6& z, int gamma, const NoiseModel& noise,
                     GainProjection mode) {
  UpdateOutcome out;
  out.posterior = est;
  if (gamma == 0) {
    return out;
  }
  if (!z.allFinite()) {
    throw InvalidArgument("measurement contains non-finite values");
  }
  const MeasurementModel m = measurement_model(est);
  out.H = m.H;
  out.innovation = z - m.z_pred;
  out.S = symmetrize<6>(m.H * est.P * m.H.transpose() + noise.R_hat);

  Eigen::SelfAdjointEigenSolver<Mat6> es(out.S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(5);
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw DegradedUpdate("innovation covariance is ill-conditioned");
  }

  const Mat20x6 PHt = est.P * m.H.transpose();
  const Mat20x6 Ku = out.S.ldlt().solve(PHt.transpose()).transpose();
  out.K = gain_projection(Ku, est.x.sigma.vec(), out.innovation, mode);
  out.correction = out.K * out.innovation;

  const Mat20 IKH = Mat20::Identity() - out.K * m.H;
  Estimate post;
  post.P = symmetrize<20>(IKH * est.P * IKH.transpose() + out.K * noise.R_hat * out.K.transpose());
  post.x = retract(est.x, out.correction);
  if (mode == GainProjection::Boundary) {
    const double bound = 1.0 - kSigmaMargin;
    post.x.sigma.s1 = std::clamp(post.x.sigma.s1, -bound, bound);
    post.x.sigma.s2 = std::clamp(post.x.sigma.s2, -bound, bound);
  }
  post.epoch = est.epoch;
  post.time = est.time;
  out.posterior = post;
  out.applied = true;
  return out;
}

Vec6 post_fit_residual(const UpdateOutcome& out) {
  return out.innovation - out.H * out.correction;
}

NoiseModel adapt_R(NoiseModel noise, const Vec6& e, const Mat6x20& H, const Mat20& P_post) {
  const Mat6 outer = e * e.transpose();
  noise.samples += 1;
  if (noise.samples <= noise.w) {
    const double n = static_cast<double>(noise.samples);
    noise.Sigma = (n - 1.0) / n * noise.Sigma + outer / n;
    noise.window.push_back(e);
  } else {
    const Vec6 old = noise.window.front();
    noise.window.pop_front();
    noise.window.push_back(e);
    noise.Sigma += (outer - old * old.transpose()) / static_cast<double>(noise.w);
  }
  noise.R_hat = floor_psd(noise.Sigma + H * P_post * H.transpose(), 1e-12);
  return noise;
}

Mat6 batch_window_covariance(const NoiseModel& noise) {
  Mat6 s = Mat6::Zero();
  if (noise.window.empty()) {
    return s;
  }
  for (const Vec6& e : noise.window) {
    s += e * e.transpose();
  }
  return s / static_cast<double>(noise.window.size());
}

void GramianTracker::step(const Mat20& Phi_k, const Mat6x20& H_k) {
  Phi_prod_ = (Phi_k * Phi_prod_).eval();
  const Mat6x20 HPhi = H_k * Phi_prod_;
  W_ += HPhi.transpose() * HPhi;
  W_ = symmetrize<20>(W_);
  ++steps_;
}

Vec20 GramianTracker::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Mat20> es(W_, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double GramianTracker::condition_number() const {
  const Vec20 ev = eigenvalues();
  if (!(ev(0) > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return ev(19) / ev(0);
}

GramianTracker gramian_step(GramianTracker tracker, const Mat20& Phi_k, const Mat6x20& H_k) {
  tracker.step(Phi_k, H_k);
  return tracker;
}

bool converged(const Estimate& est, double threshold) {
  return est.P.block<8, 8>(idx::sigma, idx::sigma).trace() < threshold;
}

bool ConvergenceLatch::observe(const Estimate& est) {
  if (!latched_ && converged(est, threshold_)) {
    latched_ = true;
    t1_ = est.time;
  }
  return latched_;
}

Eigen::Matrix<double, 7, 1> block_traces(const Mat20& P) {
  Eigen::Matrix<double, 7, 1> t;
  t << P.block<3, 3>(idx::q, idx::q).trace(), P.block<3, 3>(idx::omega, idx::omega).trace(),
      P.block<3, 3>(idx::rho, idx::rho).trace(), P.block<3, 3>(idx::rho_dot, idx::rho_dot).trace(),
      P.block<2, 2>(idx::sigma, idx::sigma).trace(), P.block<3, 3>(idx::varrho, idx::varrho).trace(),
      P.block<3, 3>(idx::mu, idx::mu).trace();
  return t;
}

}  // namespace vservo
