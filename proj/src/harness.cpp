#include "vservo/harness.hpp"

#include <cmath>
#include <optional>

#include <Eigen/Eigenvalues>

#include "vservo/errors.hpp"

namespace vservo {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint64_t { kCloud = 1, kOutlier = 2, kInit = 3, kTrial = 4 };

Vec3 gaussian3(std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Vec3(n(rng), n(rng), n(rng)) * sd;
}

UnitQuaternion small_rotation(std::mt19937_64& rng, double sd) {
  const Vec3 v = gaussian3(rng, sd);
  const double a = v.norm();
  return a > 0.0 ? UnitQuaternion::from_axis_angle(v / a, a) : UnitQuaternion();
}

struct Patch {
  Vec3 origin;
  Vec3 u;
  Vec3 v;
};

}  // namespace

std::vector<Vec3> make_model_points(const ScenarioConfig& cfg, const TargetState& truth) {
  // Body-frame geometry: bus box, one-sided solar panel, boom with dish.
  const Vec3 h(0.4, 0.3, 0.25);
  std::vector<Patch> patches = {
      {Vec3(h.x(), -h.y(), -h.z()), Vec3(0, 2 * h.y(), 0), Vec3(0, 0, 2 * h.z())},
      {Vec3(-h.x(), -h.y(), -h.z()), Vec3(0, 2 * h.y(), 0), Vec3(0, 0, 2 * h.z())},
      {Vec3(-h.x(), h.y(), -h.z()), Vec3(2 * h.x(), 0, 0), Vec3(0, 0, 2 * h.z())},
      {Vec3(-h.x(), -h.y(), -h.z()), Vec3(2 * h.x(), 0, 0), Vec3(0, 0, 2 * h.z())},
      {Vec3(-h.x(), -h.y(), h.z()), Vec3(2 * h.x(), 0, 0), Vec3(0, 2 * h.y(), 0)},
      {Vec3(-h.x(), -h.y(), -h.z()), Vec3(2 * h.x(), 0, 0), Vec3(0, 2 * h.y(), 0)},
      {Vec3(-0.25, h.y() + 0.05, 0.0), Vec3(0.5, 0, 0), Vec3(0, 0.9, 0)},
  };
  std::vector<double> area;
  for (const Patch& p : patches) area.push_back(p.u.cross(p.v).norm());
  const Vec3 boom_a(h.x(), 0.05, 0.1);
  const Vec3 boom_b(h.x() + 0.35, 0.05, 0.3);
  const double boom_r = 0.02;
  const double dish_r = 0.15;
  const double boom_area = 2.0 * M_PI * boom_r * (boom_b - boom_a).norm();
  const double dish_area = M_PI * dish_r * dish_r;
  double total = boom_area + dish_area;
  for (double a : area) total += a;

  std::mt19937_64 rng = stream(cfg.model.seed, 0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Vec3> body;
  body.reserve(static_cast<std::size_t>(cfg.model.points));
  const int n = cfg.model.points;
  for (int i = 0; i < n; ++i) {
    double pick = u01(rng) * total;
    bool placed = false;
    for (std::size_t k = 0; k < patches.size() && !placed; ++k) {
      if (pick < area[k]) {
        body.push_back(patches[k].origin + u01(rng) * patches[k].u + u01(rng) * patches[k].v);
        placed = true;
      }
      pick -= area[k];
    }
    if (placed) continue;
    const Vec3 axis = (boom_b - boom_a).normalized();
    const Vec3 e1 = axis.unitOrthogonal();
    const Vec3 e2 = axis.cross(e1);
    const double phi = 2.0 * M_PI * u01(rng);
    if (pick < boom_area) {
      body.push_back(boom_a + u01(rng) * (boom_b - boom_a) + boom_r * (std::cos(phi) * e1 + std::sin(phi) * e2));
    } else {
      const double r = dish_r * std::sqrt(u01(rng));
      body.push_back(boom_b + r * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
  }
  // d = A(mu)^T (p - varrho): body point expressed in the grasp frame.
  const Mat3 Amu_t = rotation_matrix(truth.mu).transpose();
  std::vector<Vec3> out;
  out.reserve(body.size());
  for (const Vec3& p : body) out.push_back(Amu_t * (p - truth.varrho));
  return out;
}

PointCloud synthesize_cloud(const TargetState& truth, const SurfaceModel& model, const ScenarioConfig& cfg,
                            double t, std::mt19937_64& rng, std::mt19937_64& outlier_rng) {
  PointCloud cloud;
  cloud.epoch = t;
  if (cfg.fault_active(t, FaultKind::Blackout)) return cloud;

  const Mat3 A = rotation_matrix(truth.grasp_attitude());
  const Vec3 rho = truth.grasp_position();
  const double sigma = cfg.noise_at(t);
  std::uniform_int_distribution<std::size_t> pick(0, model.size() - 1);
  std::normal_distribution<double> n(0.0, 1.0);
  cloud.points.reserve(static_cast<std::size_t>(cfg.cloud.points));
  for (int i = 0; i < cfg.cloud.points; ++i) {
    const Vec3& d = model.points()[pick(rng)];
    cloud.points.push_back(A * d + rho + sigma * Vec3(n(rng), n(rng), n(rng)));
  }

  if (cfg.fault_active(t, FaultKind::OutlierBurst)) {
    const std::size_t m = cloud.points.size();
    const auto count = static_cast<std::size_t>(0.3 * static_cast<double>(m));
    const double half = 0.5 * model.diameter();
    std::uniform_real_distribution<double> u(-half, half);
    std::uniform_int_distribution<std::size_t> which(0, m - 1);
    for (std::size_t i = 0; i < count; ++i) {
      cloud.points[which(outlier_rng)] = rho + Vec3(u(outlier_rng), u(outlier_rng), u(outlier_rng));
    }
  }

  double fraction = 0.0;
  if (cfg.fault_active(t, FaultKind::Occlusion, &fraction) && fraction > 0.0) {
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : cloud.points) centroid += p;
    centroid /= static_cast<double>(cloud.points.size());
    const double cut = -M_PI + 2.0 * M_PI * fraction;
    std::vector<Vec3> kept;
    for (const Vec3& p : cloud.points) {
      const double theta = std::atan2(p.y() - centroid.y(), p.x() - centroid.x());
      if (fraction < 1.0 && theta >= cut) kept.push_back(p);
    }
    cloud.points = std::move(kept);
  }
  return cloud;
}

RunLog run(const ScenarioConfig& cfg) {
  cfg.validate();
  RunLog log;
  RunSummary& sum = log.summary;

  TargetState truth = cfg.initial;
  truth.sigma = sigma_from_inertia(cfg.inertia.x(), cfg.inertia.y(), cfg.inertia.z());

  std::mt19937_64 cloud_rng = stream(cfg.run.seed, kCloud);
  std::mt19937_64 outlier_rng = stream(cfg.run.seed, kOutlier);
  std::mt19937_64 init_rng = stream(cfg.run.seed, kInit);

  const SurfaceModel model(make_model_points(cfg, truth));
  const auto& ec = cfg.estimator;
  NoiseModel noise = NoiseModel::make(Mat6(ec.Qc.asDiagonal()), Mat6(ec.R0.asDiagonal()), ec.w);
  GramianTracker ogm;
  ConvergenceLatch latch(ec.convergence_threshold);
  Estimate est;

  ChaserState chaser{cfg.guidance.chaser_r, cfg.guidance.chaser_r_dot};
  std::optional<CostateSolution> plan;
  long plan_epoch = 0;
  bool captured = false;

  const double h = cfg.scan_period();
  const long epochs = cfg.epochs();
  log.epochs.reserve(static_cast<std::size_t>(epochs));

  for (long k = 0; k < epochs; ++k) {
    const double t = static_cast<double>(k) * h;
    const double t_prev = static_cast<double>(k - 1) * h;
    Mat20 Phi = Mat20::Identity();
    if (k > 0) {
      const TargetState truth_prev = truth;
      truth = propagate(truth, h, cfg.run.dt);
      est = predict(est, noise, h, &Phi);
      est.time = t;
      est.epoch = k;
      if (plan && !captured) {
        if (plan->t_f <= t) {
          chaser = advance(*plan, chaser, cfg.guidance.a_max, t_prev, plan->t_f, cfg.guidance.rollout_dt);
          const TargetState at_tf = propagate(truth_prev, plan->t_f - t_prev, cfg.run.dt);
          captured = true;
          sum.captured = true;
          sum.capture_time = plan->t_f;
          sum.capture_position_error = (chaser.r - at_tf.grasp_position()).norm();
          sum.capture_velocity_error = (chaser.r_dot - at_tf.grasp_velocity()).norm();
        } else {
          chaser = advance(*plan, chaser, cfg.guidance.a_max, t_prev, t, cfg.guidance.rollout_dt);
        }
      }
    }

    const PointCloud cloud = synthesize_cloud(truth, model, cfg, t, cloud_rng, outlier_rng);
    CoarsePose seed;
    if (k == 0) {
      seed.eta = quat_product(small_rotation(init_rng, ec.err_attitude), truth.grasp_attitude());
      seed.rho = truth.grasp_position() + gaussian3(init_rng, ec.err_position);
    } else {
      seed = predict_initial_pose(est);
    }
    const PoseMeasurement meas = register_cloud(cloud, model, seed.eta, seed.rho, cfg.eps_threshold(t), ec.n_max);

    EpochRecord rec;
    rec.t = t;
    rec.fit_error = meas.fit_error;
    rec.iterations = meas.iterations;
    if (meas.gamma == 1) {
      const UnitQuaternion d = quat_product(quat_product(quat_inverse(truth.mu), meas.eta_bar), quat_inverse(truth.q));
      rec.meas_error << meas.rho_bar - truth.grasp_position(), d.vec();
    }

    if (k == 0) {
      // Initial estimate from the first registration and perturbed priors.
      est.x.varrho = truth.varrho + gaussian3(init_rng, ec.err_varrho);
      est.x.mu = quat_product(truth.mu, small_rotation(init_rng, ec.err_mu));
      est.x.sigma = InertiaParams::checked(ec.sigma_guess.x(), ec.sigma_guess.y());
      est.x.q = quat_product(quat_inverse(est.x.mu), meas.eta_bar);
      est.x.rho_o = meas.rho_bar - rotation_matrix(est.x.q) * est.x.varrho;
      est.x.omega = truth.omega + gaussian3(init_rng, ec.err_rate);
      est.x.rho_o_dot = truth.rho_o_dot + gaussian3(init_rng, ec.err_velocity);
      est.P = ec.P0.matrix();
      est.time = 0.0;
      est.epoch = 0;
      rec.gamma = meas.gamma;
      ogm.step(Phi, measurement_model(est).H);
    } else {
      const MeasurementModel mm = measurement_model(est);
      const Vec6 z = measurement_vector(meas.rho_bar, meas.eta_bar, est);
      const Vec6 innovation = z - mm.z_pred;
      const Mat6 S = mm.H * est.P * mm.H.transpose() + noise.R_hat;
      const double alpha_th = ec.alpha_th > 0.0 ? ec.alpha_th : 3.0 * std::sqrt(S.trace());
      int gamma = fault_detect(meas, innovation, cfg.eps_threshold(t), alpha_th, ec.L);
      if (gamma == 1) {
        try {
          const UpdateOutcome out = update(est, z, 1, noise, ec.projection);
          noise = adapt_R(noise, post_fit_residual(out), out.H, out.posterior.P);
          est = out.posterior;
        } catch (const DegradedUpdate&) {
          gamma = 0;
        }
      }
      rec.gamma = gamma;
      rec.z = z;
      rec.innovation_norm = innovation.norm();
      if (gamma == 0) ++sum.rejected_epochs;
      ogm.step(Phi, mm.H);
    }
    latch.observe(est);

    // Guidance after the convergence handoff.
    if (cfg.guidance.enabled && latch.latched() && !captured) {
      bool due = !plan || (k - plan_epoch) >= cfg.guidance.replan_period;
      if (plan && plan->t_f - t < h) due = false;
      if (due) {
        try {
          SolveOptions so;
          so.warm_start = plan;
          const CostateSolution sol = solve(chaser, est, cfg.guidance.a_max, t, so);
          const Trajectory traj = rollout(sol, chaser, cfg.guidance.a_max, cfg.guidance.rollout_dt);
          const GraspPrediction tgt = predict_target(est, sol.t_f, 5e-3);
          const double pe = (traj.samples.back().r - tgt.rho).norm();
          const double ve = (traj.samples.back().r_dot - tgt.rho_dot).norm();
          sum.plan_position_error = sum.plans == 0 ? pe : std::max(sum.plan_position_error, pe);
          sum.plan_velocity_error = sum.plans == 0 ? ve : std::max(sum.plan_velocity_error, ve);
          if (sum.plans == 0) sum.first_plan_tf = sol.t_f;
          ++sum.plans;
          plan = sol;
          plan_epoch = k;
        } catch (const NoSolution&) {
          ++sum.no_solution;
        }
      }
    }

    rec.truth = truth;
    rec.estimate = est.x;
    rec.P_traces = block_traces(est.P);
    rec.R_trace = noise.R_hat.trace();
    rec.ogm_condition = ogm.condition_number();
    rec.position_error = (est.x.grasp_position() - truth.grasp_position()).norm();
    rec.attitude_error = angle_between(est.x.grasp_attitude(), truth.grasp_attitude());
    if (plan) {
      rec.planned_tf = plan->t_f;
      rec.residual = plan->residual;
    }
    rec.chaser_r = chaser.r;
    rec.chaser_r_dot = chaser.r_dot;
    const InertiaParams& s = est.x.sigma;
    sum.max_abs_sigma = std::max({sum.max_abs_sigma, std::abs(s.s1), std::abs(s.s2), std::abs(s.sigma3())});
    sum.max_abs_gamma = std::max(sum.max_abs_gamma, std::abs(gamma_residual(s.s1, s.s2, s.sigma3())));
    log.epochs.push_back(rec);
  }

  sum.epochs = epochs;
  sum.converged = latch.latched();
  sum.t1 = latch.t1();
  sum.planned = sum.plans > 0;
  if (!log.epochs.empty()) {
    sum.final_position_error = log.epochs.back().position_error;
    sum.final_attitude_error = log.epochs.back().attitude_error;
  }
  return log;
}

std::vector<RunLog> run_monte_carlo(const ScenarioConfig& cfg, int trials, bool keep_epochs) {
  if (trials < 1) throw InvalidArgument("run_monte_carlo: trials must be positive");
  cfg.validate();
  std::vector<RunLog> logs(static_cast<std::size_t>(trials));
  std::vector<std::string> errors(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < trials; ++i) {
    ScenarioConfig c = cfg;
    c.run.seed = cfg.run.seed + static_cast<std::uint64_t>(i);
    std::mt19937_64 rng = stream(c.run.seed, kTrial);
    if (cfg.monte_carlo.randomize_inertia) {
      std::uniform_real_distribution<double> u(1.0, 3.0);
      for (;;) {
        const Vec3 I(u(rng), u(rng), u(rng));
        try {
          sigma_from_inertia(I.x(), I.y(), I.z());
          c.inertia = I;
          break;
        } catch (const InvalidArgument&) {
        }
      }
    }
    if (cfg.monte_carlo.randomize_attitude) {
      std::normal_distribution<double> n(0.0, 1.0);
      c.initial.q = UnitQuaternion::normalized(Vec3(n(rng), n(rng), n(rng)), n(rng));
    }
    try {
      logs[static_cast<std::size_t>(i)] = run(c);
      if (!keep_epochs) {
        logs[static_cast<std::size_t>(i)].epochs.clear();
        logs[static_cast<std::size_t>(i)].epochs.shrink_to_fit();
      }
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("trial " + std::to_string(i) + ": " + errors[i]);
  }
  return logs;
}

}  // namespace vservo
