#include "acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "vservo/dynamics.hpp"
#include "vservo/estimator.hpp"
#include "vservo/guidance.hpp"
#include "vservo/harness.hpp"
#include "vservo/icp.hpp"

namespace vservo::acceptance {

namespace {

using testing::random_quaternion;
using testing::random_vec;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ScenarioConfig scenario(const char* name) {
  return load_config(std::filesystem::path(VSERVO_CONFIG_DIR) / name);
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

bool constraint_satisfaction(std::ostream& out) {
  const ScenarioConfig cfg = scenario("constraint_mc.json");
  const auto t0 = Clock::now();
  const std::vector<RunLog> logs = run_monte_carlo(cfg, 100, false);
  const double elapsed = seconds_since(t0);
  int violations = 0;
  long epochs = 0;
  double max_sigma = 0.0;
  double max_gamma = 0.0;
  for (const RunLog& log : logs) {
    const RunSummary& s = log.summary;
    if (!(s.max_abs_sigma < 1.0) || !(s.max_abs_gamma <= 1e-12)) ++violations;
    epochs += s.epochs;
    max_sigma = std::max(max_sigma, s.max_abs_sigma);
    max_gamma = std::max(max_gamma, s.max_abs_gamma);
  }
  out << fmt("%zu runs, %ld epochs, max|sigma| %.9f, max|Gamma| %.1e, %d violations, %.1f s", logs.size(), epochs,
             max_sigma, max_gamma, violations, elapsed);
  return violations == 0 && epochs == 100L * 2000L && elapsed < 300.0;
}

bool horn_oracle(std::ostream& out) {
  std::mt19937_64 rng(20261016);
  std::uniform_int_distribution<int> size(3, 64);
  double worst_rot = 0.0;
  double worst_trans = 0.0;
  for (int set = 0; set < 1000; ++set) {
    std::vector<Vec3> C(static_cast<std::size_t>(size(rng)));
    for (Vec3& c : C) c = random_vec(rng, 1.0);
    const UnitQuaternion q = random_quaternion(rng);
    const Vec3 t = random_vec(rng, 3.0);
    const Mat3 A = rotation_matrix(q);
    std::vector<Vec3> D(C.size());
    for (std::size_t i = 0; i < C.size(); ++i) D[i] = A * C[i] + t;
    const HornFit f = horn_fit(C, D);
    worst_rot = std::max(worst_rot, angle_between(f.eta, q));
    worst_trans = std::max(worst_trans, (f.rho - t).norm());
  }

  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int beaten = 0;
  const int sets = 10;
  for (int set = 0; set < sets; ++set) {
    std::vector<Vec3> C(8), D(8);
    for (int i = 0; i < 8; ++i) {
      C[static_cast<std::size_t>(i)] = random_vec(rng, 1.0);
      D[static_cast<std::size_t>(i)] = random_vec(rng, 1.0);
    }
    const HornFit f = horn_fit(C, D);
    bool best = true;
    for (int k = 0; k < 100000 && best; ++k) {
      // Half the candidates are uniform, half are small perturbations of the fit.
      UnitQuaternion q;
      Vec3 t;
      if (k % 2 == 0) {
        q = random_quaternion(rng);
        t = Vec3(u(rng), u(rng), u(rng));
      } else {
        const double scale = std::pow(10.0, -1.0 - 5.0 * (u(rng) + 1.0) / 2.0);
        q = quat_product(UnitQuaternion::normalized(random_vec(rng, scale), 1.0), f.eta);
        t = f.rho + random_vec(rng, scale);
      }
      if (fit_error(C, D, q, t) < f.eps) best = false;
    }
    if (best) ++beaten;
  }
  out << fmt("1000 noiseless sets: rotation %.1e rad, translation %.1e m; m = 8: fit beat 1e5 candidates in %d/%d",
             worst_rot, worst_trans, beaten, sets);
  return worst_rot < 1e-9 && worst_trans < 1e-9 && beaten == sets;
}

bool jacobian_checks(std::ostream& out) {
  std::mt19937_64 rng(31);
  double worst_F = 0.0;
  double worst_H = 0.0;
  for (int i = 0; i < 100; ++i) {
    Estimate est;
    est.x = testing::random_state(rng);
    worst_F = std::max(worst_F, testing::relative_error(jacobians(est.x).F, testing::numeric_F(est.x)));
    worst_H = std::max(worst_H, testing::relative_error(measurement_model(est).H, testing::numeric_H(est)));
  }
  out << fmt("100 random interior states: F %.1e, H %.1e relative", worst_F, worst_H);
  return worst_F < 1e-4 && worst_H < 1e-4;
}

double pose_error(const EpochRecord& r, double L) {
  return std::hypot(r.position_error, L * r.attitude_error);
}

double rms_pose_error(const std::vector<EpochRecord>& epochs, long from, long to, double L) {
  double s = 0.0;
  for (long k = from; k < to; ++k) s += std::pow(pose_error(epochs[static_cast<std::size_t>(k)], L), 2);
  return std::sqrt(s / static_cast<double>(to - from));
}

bool fault_recovery(std::ostream& out) {
  const ScenarioConfig cfg = scenario("blackout.json");
  const FaultWindow& w = cfg.faults.at(0);
  const RunLog log = run(cfg);
  const auto& ep = log.epochs;
  const double L = cfg.estimator.L;

  bool gamma_matches = true;
  long first = -1;
  long last = -1;
  for (std::size_t k = 1; k < ep.size(); ++k) {
    const bool inside = ep[k].t >= w.start && ep[k].t < w.end;
    if (inside != (ep[k].gamma == 0)) gamma_matches = false;
    if (inside && first < 0) first = static_cast<long>(k);
    if (inside) last = static_cast<long>(k);
  }
  bool trace_ok = first > 0;
  for (long k = first; trace_ok && k <= last; ++k) {
    const double before = ep[static_cast<std::size_t>(k - 1)].P_traces.sum();
    if (ep[static_cast<std::size_t>(k)].P_traces.sum() < before) trace_ok = false;
  }
  const long end = last + 1;
  const bool room = first >= 10 && end + 20 <= static_cast<long>(ep.size());
  const double pre = room ? rms_pose_error(ep, first - 10, first, L) : NAN;
  const double post = room ? rms_pose_error(ep, end + 10, end + 20, L) : NAN;
  const double peak = room ? pose_error(ep[static_cast<std::size_t>(last)], L) : NAN;
  out << fmt("blackout %.1f-%.1f s: gamma=0 exactly in window %s, trace(P) non-decreasing %s, error pre %.2e, "
             "end of window %.2e, 10-20 epochs after %.2e",
             w.start, w.end, gamma_matches ? "yes" : "no", trace_ok ? "yes" : "no", pre, peak, post);
  return gamma_matches && trace_ok && room && post <= 2.0 * pre;
}

bool noise_adaptation(std::ostream& out) {
  const ScenarioConfig cfg = scenario("noise_doubling.json");
  const NoiseStep step = cfg.cloud.noise_schedule.at(0);
  const long w = static_cast<long>(cfg.estimator.w);
  const RunLog log = run(cfg);
  const auto& ep = log.epochs;

  // True measurement covariance after the change, from the registration errors.
  Mat6 S = Mat6::Zero();
  Vec6 mean = Vec6::Zero();
  int n = 0;
  long k_step = -1;
  for (std::size_t k = 0; k < ep.size(); ++k) {
    if (ep[k].t < step.time) continue;
    if (k_step < 0) k_step = static_cast<long>(k);
    if (ep[k].gamma == 0) continue;
    mean += ep[k].meas_error;
    S += ep[k].meas_error * ep[k].meas_error.transpose();
    ++n;
  }
  const double true_trace = n > 0 ? S.trace() / n : NAN;
  long settled = -1;
  for (long k = static_cast<long>(ep.size()) - 1; k >= k_step; --k) {
    const double ratio = ep[static_cast<std::size_t>(k)].R_trace / true_trace;
    if (!(ratio <= 1.5 && ratio >= 1.0 / 1.5)) break;
    settled = k;
  }
  const long lag = settled >= 0 ? settled - k_step : -1;

  // Recursive window second moment against the batch value.
  std::mt19937_64 rng(41);
  std::normal_distribution<double> g(0.0, 1.0);
  NoiseModel noise = NoiseModel::make(Mat6::Identity() * 1e-8, Mat6::Identity() * 1e-6, cfg.estimator.w);
  const Mat6x20 H = Mat6x20::Zero();
  const Mat20 P = Mat20::Zero();
  double worst = 0.0;
  for (long k = 1; k <= 4 * w; ++k) {
    const double sd = k > 2 * w ? 2e-3 : 1e-3;
    Vec6 e;
    for (int i = 0; i < 6; ++i) e(i) = sd * g(rng);
    noise = adapt_R(noise, e, H, P);
    if (k >= w) {
      const Mat6 batch = batch_window_covariance(noise);
      worst = std::max(worst, (noise.Sigma - batch).cwiseAbs().maxCoeff() / batch.cwiseAbs().maxCoeff());
    }
  }
  out << fmt("true trace after change %.3e, trace(R) %.3e at the end, within 1.5x from %ld epochs after the change "
             "(limit %ld); recursive vs batch window %.1e relative",
             true_trace, ep.back().R_trace, lag, 3 * w, worst);
  return lag >= 0 && lag <= 3 * w && worst < 1e-12;
}

GramianTracker gramian_along(TargetState x, int epochs) {
  Estimate est;
  est.x = x;
  const NoiseModel noise = NoiseModel::make(Mat6::Identity() * 1e-8, Mat6::Identity() * 1e-6, 100);
  GramianTracker ogm;
  ogm.step(Mat20::Identity(), measurement_model(est).H);
  for (int k = 1; k < epochs; ++k) {
    Mat20 Phi;
    est = predict(est, noise, 0.1, &Phi);
    ogm.step(Phi, measurement_model(est).H);
  }
  return ogm;
}

bool observability(std::ostream& out) {
  TargetState x = default_target();
  x.sigma = sigma_from_inertia(2.0, 3.0, 4.0);
  x.omega.setZero();
  const GramianTracker still = gramian_along(x, 100);
  x.omega = Vec3(0.2, -0.15, 0.25);
  const GramianTracker tumbling = gramian_along(x, 100);
  const Vec20 ev = still.eigenvalues();
  const double ratio = ev(0) / ev(19);
  const double c_still = still.condition_number();
  const double c_tumble = tumbling.condition_number();
  out << fmt("omega = 0: lambda_min/lambda_max %.1e, cond %.1e; tumbling: cond %.1e", ratio, c_still, c_tumble);
  return ratio < 1e-12 && std::isfinite(c_tumble) && c_tumble * 1e3 <= c_still;
}

struct TerminalErrors {
  double position = 0.0;
  double velocity = 0.0;
};

TerminalErrors terminal(const Trajectory& traj, const Estimate& est, double t_f) {
  const GraspPrediction tgt = predict_target(est, t_f, 1e-3);
  return {(traj.samples.back().r - tgt.rho).norm(), (traj.samples.back().r_dot - tgt.rho_dot).norm()};
}

bool guidance_oracle(std::ostream& out) {
  bool ok = true;
  Estimate still;
  still.x.rho_o = Vec3(2.0, 0.0, 0.0);
  const ChaserState rest;
  const CostateSolution sol = solve(rest, still, 1.0, 0.0);
  const double expect = 2.0 * std::sqrt(2.0);
  const double tf_err = std::abs(sol.t_f - expect) / expect;
  const double tau_s = sol.c1.dot(sol.c2) / sol.c1.squaredNorm();
  const double switch_err = std::abs(tau_s - sol.t_f / 2.0) / (sol.t_f / 2.0);
  const Trajectory traj = rollout(sol, rest, 1.0, 0.01);
  double h_min = 1e300;
  double h_max = -1e300;
  for (const TrajectorySample& s : traj.samples) {
    const double H = hamiltonian(s.t, sol.c1, sol.c2, s.r_dot, s.u);
    h_min = std::min(h_min, H);
    h_max = std::max(h_max, H);
  }
  const double h_spread = (h_max - h_min) / std::max(std::abs(h_max), std::abs(h_min));
  const TerminalErrors e1 = terminal(traj, still, sol.t_f);
  ok = ok && tf_err < 1e-3 && switch_err < 1e-3 && h_spread <= 1e-4 && e1.position < 1e-3 && e1.velocity < 1e-3;

  Estimate drift;
  drift.x.rho_o = Vec3(1.5, -0.5, 0.8);
  drift.x.rho_o_dot = Vec3(0.05, 0.1, -0.02);
  const CostateSolution s2 = solve(rest, drift, 0.5, 0.0);
  const TerminalErrors e2 = terminal(rollout(s2, rest, 0.5, 0.005), drift, s2.t_f);

  Estimate sphere;
  sphere.x.rho_o = Vec3(1.0, 0.5, 1.5);
  sphere.x.omega = Vec3(0.0, 0.1, 0.3);
  sphere.x.varrho = Vec3(0.3, 0.0, 0.1);
  const CostateSolution s3 = solve(rest, sphere, 0.5, 0.0);
  const TerminalErrors e3 = terminal(rollout(s3, rest, 0.5, 0.005), sphere, s3.t_f);
  ok = ok && e2.position < 1e-3 && e2.velocity < 1e-3 && e3.position < 1e-3 && e3.velocity < 1e-3;

  out << fmt("1D t_f %.6f s (rel %.1e), switch rel %.1e, H spread %.1e, terminal %.1e m %.1e m/s; drift %.1e m "
             "%.1e m/s; spinning %.1e m %.1e m/s",
             sol.t_f, tf_err, switch_err, h_spread, e1.position, e1.velocity, e2.position, e2.velocity, e3.position,
             e3.velocity);
  return ok;
}

bool end_to_end(std::ostream& out) {
  const ScenarioConfig cfg = scenario("nominal.json");
  const auto t0 = Clock::now();
  const RunLog a = run(cfg);
  const double elapsed = seconds_since(t0);
  const RunLog b = run(cfg);
  bool same = a.epochs.size() == b.epochs.size() && summary_json(a.summary) == summary_json(b.summary);
  for (std::size_t k = 0; same && k < a.epochs.size(); ++k) {
    const std::vector<double> ra = epoch_row(a.epochs[k]);
    const std::vector<double> rb = epoch_row(b.epochs[k]);
    for (std::size_t i = 0; i < ra.size(); ++i) {
      if (std::memcmp(&ra[i], &rb[i], sizeof(double)) != 0) same = false;
    }
  }
  const RunSummary& s = a.summary;
  out << fmt("t1 %.1f s, %d plans, first t_f %.3f s, rollout terminal %.1e m %.1e m/s, capture at %.3f s with "
             "%.1e m %.1e m/s, deterministic %s, %.2f s",
             s.t1, s.plans, s.first_plan_tf, s.plan_position_error, s.plan_velocity_error, s.capture_time,
             s.capture_position_error, s.capture_velocity_error, same ? "yes" : "no", elapsed);
  return s.converged && std::isfinite(s.t1) && s.planned && s.plan_position_error < 1e-3 &&
         s.plan_velocity_error < 1e-3 && s.captured && s.capture_position_error < 1e-3 &&
         s.capture_velocity_error < 1e-3 && same && elapsed < 60.0;
}

}  // namespace

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> list = {
      {1, "constraint satisfaction", constraint_satisfaction},
      {2, "Horn oracle", horn_oracle},
      {3, "Jacobian checks", jacobian_checks},
      {4, "fault recovery", fault_recovery},
      {5, "noise adaptation", noise_adaptation},
      {6, "observability", observability},
      {7, "guidance 1D oracle", guidance_oracle},
      {8, "end-to-end", end_to_end},
  };
  return list;
}

int run(std::ostream& out, int only) {
  int failures = 0;
  for (const Criterion& c : criteria()) {
    if (only != 0 && c.id != only) continue;
    std::ostringstream detail;
    bool pass = false;
    try {
      pass = c.check(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    out << (pass ? "PASS" : "FAIL") << "  " << c.id << ". " << c.name << ": " << detail.str() << std::endl;
    if (!pass) ++failures;
  }
  return failures;
}

}  // namespace vservo::acceptance
