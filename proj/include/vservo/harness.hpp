#pragma once

// Closed-loop scenario simulator: ground-truth target, synthetic point
// clouds with injected faults, registration, filtering and guidance.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "vservo/dynamics.hpp"
#include "vservo/estimator.hpp"
#include "vservo/guidance.hpp"
#include "vservo/icp.hpp"

namespace vservo {

enum class FaultKind { Blackout, OutlierBurst, Occlusion };

struct FaultWindow {
  double start = 0.0;  ///< s
  double end = 0.0;    ///< s
  FaultKind kind = FaultKind::Blackout;
  double fraction = 1.0;  ///< occluded fraction of the view (occlusion only)
};

struct NoiseStep {
  double time = 0.0;   ///< s
  double noise = 0.0;  ///< per-axis sigma from this time on, m
};

/// Slowly tumbling target about 3 m in front of the camera.
TargetState default_target();

struct ScenarioConfig {
  Vec3 inertia = Vec3(2.0, 3.0, 4.0);  ///< principal moments, kg m^2
  TargetState initial = default_target();  ///< sigma is derived from inertia

  struct Model {
    int points = 3000;
    std::uint64_t seed = 7;
  } model;

  struct Cloud {
    int points = 400;
    double noise = 0.005;  ///< m
    double rate = 10.0;    ///< Hz
    std::vector<NoiseStep> noise_schedule;
  } cloud;

  std::vector<FaultWindow> faults;

  struct Estimator {
    std::size_t w = 100;
    Vec6 Qc = Vec6::Constant(1e-8);
    Vec6 R0 = Vec6::Constant(1e-6);
    InitialCovariance P0;
    double eps_th = -1.0;    ///< <= 0 selects (3 noise)^2
    int n_max = 30;
    double alpha_th = -1.0;  ///< <= 0 selects 3 sqrt(trace S) per epoch
    double L = 1.0;          ///< m/rad
    double convergence_threshold = 0.05;
    GainProjection projection = GainProjection::Boundary;
    // Initial estimate: one-sigma perturbations of the truth.
    double err_attitude = 0.05;  ///< rad, seed pose for the first registration
    double err_position = 0.02;  ///< m
    double err_rate = 0.02;      ///< rad/s
    double err_velocity = 0.005; ///< m/s
    double err_varrho = 0.05;    ///< m
    double err_mu = 0.05;        ///< rad
    Vec2 sigma_guess = Vec2::Zero();
  } estimator;

  struct Guidance {
    bool enabled = true;
    double a_max = 0.2;  ///< m/s^2
    int replan_period = 10;
    double rollout_dt = 0.01;
    Vec3 chaser_r = Vec3(0.0, 0.0, 0.5);
    Vec3 chaser_r_dot = Vec3::Zero();
  } guidance;

  struct Run {
    double duration = 60.0;  ///< s
    double dt = 0.01;        ///< truth integrator step, s
    std::uint64_t seed = 1;
  } run;

  struct MonteCarlo {
    bool randomize_inertia = false;
    bool randomize_attitude = false;
  } monte_carlo;

  /// Throws ConfigError on violated invariants.
  void validate() const;
  double noise_at(double t) const;
  double eps_threshold(double t) const;
  bool fault_active(double t, FaultKind kind, double* fraction = nullptr) const;
  long epochs() const;
  double scan_period() const { return 1.0 / cloud.rate; }
};

/// Parses the JSON scenario text; unknown keys and bad values raise
/// ConfigError naming the offending key.
ScenarioConfig parse_config(const std::string& json_text);
ScenarioConfig load_config(const std::filesystem::path& path);

/// Satellite-like shape (bus, solar panel, antenna boom) sampled on its
/// surface, expressed in the grasp frame {C} of the given truth state.
std::vector<Vec3> make_model_points(const ScenarioConfig& cfg, const TargetState& truth);

/// Camera-frame cloud c = A(eta) d + rho + noise for m randomly chosen model
/// points, with the faults active at time t applied.
PointCloud synthesize_cloud(const TargetState& truth, const SurfaceModel& model, const ScenarioConfig& cfg,
                            double t, std::mt19937_64& rng, std::mt19937_64& outlier_rng);

struct EpochRecord {
  double t = 0.0;
  TargetState truth;
  TargetState estimate;
  Eigen::Matrix<double, 7, 1> P_traces = Eigen::Matrix<double, 7, 1>::Zero();
  Vec6 z = Vec6::Zero();
  Vec6 meas_error = Vec6::Zero();  ///< registered pose minus truth, measurement coordinates
  double fit_error = 0.0;
  int iterations = 0;
  int gamma = 0;
  double innovation_norm = 0.0;
  double R_trace = 0.0;
  double ogm_condition = 0.0;
  double position_error = 0.0;  ///< grasp point, m
  double attitude_error = 0.0;  ///< grasp frame, rad
  double planned_tf = std::numeric_limits<double>::quiet_NaN();
  double residual = std::numeric_limits<double>::quiet_NaN();
  Vec3 chaser_r = Vec3::Zero();
  Vec3 chaser_r_dot = Vec3::Zero();
};

struct RunSummary {
  long epochs = 0;
  bool converged = false;
  double t1 = std::numeric_limits<double>::quiet_NaN();
  bool planned = false;
  int plans = 0;
  int no_solution = 0;
  double first_plan_tf = std::numeric_limits<double>::quiet_NaN();
  double plan_position_error = std::numeric_limits<double>::quiet_NaN();  ///< max over plans
  double plan_velocity_error = std::numeric_limits<double>::quiet_NaN();
  bool captured = false;
  double capture_time = std::numeric_limits<double>::quiet_NaN();
  double capture_position_error = std::numeric_limits<double>::quiet_NaN();  ///< vs truth
  double capture_velocity_error = std::numeric_limits<double>::quiet_NaN();
  int rejected_epochs = 0;
  double max_abs_sigma = 0.0;
  double max_abs_gamma = 0.0;
  double final_position_error = 0.0;
  double final_attitude_error = 0.0;
};

struct RunLog {
  std::vector<EpochRecord> epochs;
  RunSummary summary;
};

RunLog run(const ScenarioConfig& cfg);

/// Independent trials with seeds cfg.run.seed + i, OpenMP-parallel.
std::vector<RunLog> run_monte_carlo(const ScenarioConfig& cfg, int trials, bool keep_epochs = false);

/// Column names of epochs.csv in order.
const std::vector<std::string>& epoch_columns();
std::vector<double> epoch_row(const EpochRecord& r);

/// Writes <dir>/epochs.csv and <dir>/summary.json.
void export_log(const RunLog& log, const std::filesystem::path& dir);
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
CsvTable read_epochs_csv(const std::filesystem::path& path);
RunSummary read_summary(const std::filesystem::path& path);
std::string summary_json(const RunSummary& s);

}  // namespace vservo
