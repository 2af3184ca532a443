#pragma once

// Minimum-time interception for a double-integrator end-effector under
// |u| <= a_max.  Pontryagin gives an affine costate p(tau) = -c1 tau + c2 and
// the control u* = -a_max p/|p|; the unknowns (c1, c2, t_f) are found by
// driving the terminal position/velocity mismatch and the Hamiltonian
// residual to zero.

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "vservo/estimator.hpp"
#include "vservo/types.hpp"

namespace vservo {

struct ChaserState {
  Vec3 r = Vec3::Zero();      ///< m
  Vec3 r_dot = Vec3::Zero();  ///< m/s
};

struct CostateSolution {
  Vec3 c1 = Vec3::Zero();
  Vec3 c2 = Vec3::Zero();
  double t0 = 0.0;        ///< time the plan starts from, s
  double t_f = 0.0;       ///< interception time, s
  double residual = 0.0;  ///< e(chi) at the solution
  int starts_converged = 0;
};

struct TrajectorySample {
  double t = 0.0;
  Vec3 r = Vec3::Zero();
  Vec3 r_dot = Vec3::Zero();
  Vec3 u = Vec3::Zero();
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  double a_max = 0.0;
};

/// u* = -a_max p/|p|.  At a zero of p the limit from the left (tau - delta)
/// is returned; throws InvalidArgument when c1 = c2 = 0.
Vec3 control_at(double tau, const Vec3& c1, const Vec3& c2, double a_max);

/// (|c1 t - c2| - |c1 t_f - c2|) a_max + c1^T v_mismatch.
double hamiltonian_residual(const Vec3& c1, const Vec3& c2, double t, double t_f, const Vec3& v_mismatch,
                            double a_max);

/// H(tau) = 1 + c1^T r_dot + p^T u.
double hamiltonian(double tau, const Vec3& c1, const Vec3& c2, const Vec3& r_dot, const Vec3& u);

struct ControlIntegrals {
  Vec3 dv = Vec3::Zero();  ///< integral of u over [t, t_f]
  Vec3 dr = Vec3::Zero();  ///< double integral (t_f - tau) u(tau) over [t, t_f]
};

/// Exact integrals of the unit-vector control.
ControlIntegrals integrate_control(const Vec3& c1, const Vec3& c2, double t, double t_f, double a_max);

/// Composite Simpson with `panels` panels on each side of the switching
/// point (the minimizer of |p|) when it falls inside (t, t_f).
ControlIntegrals integrate_control_simpson(const Vec3& c1, const Vec3& c2, double t, double t_f,
                                           double a_max, int panels = 200);

struct GraspPrediction {
  Vec3 rho = Vec3::Zero();
  Vec3 rho_dot = Vec3::Zero();
};

/// Propagates the estimate (noise free) to t_f with step dt and evaluates
/// the grasp point position and velocity there.
GraspPrediction predict_target(const Estimate& est, double t_f, double dt);

/// Caches a propagated target trajectory on a fixed grid so repeated
/// queries at nearby t_f cost one short propagation.  Not thread-safe.
class TargetPredictor {
 public:
  explicit TargetPredictor(const Estimate& est, double grid_step = 0.02);
  GraspPrediction at(double t_f);
  double start_time() const { return t0_; }

 private:
  double t0_;
  double h_;
  std::vector<TargetState> nodes_;
};

enum class Quadrature { ClosedForm, Simpson };

struct ResidualOptions {
  Quadrature quadrature = Quadrature::ClosedForm;
  int simpson_panels = 200;
};

/// The seven stacked residuals [velocity mismatch; position mismatch; dH]
/// for chi = [c1; c2; t_f] (absolute time).
Vec7 residual_vector(const Vec7& chi, const ChaserState& chaser, TargetPredictor& target, double a_max,
                     double t, const ResidualOptions& opts = {});

/// e(chi) = |residual_vector|.
double residual(const Vec7& chi, const ChaserState& chaser, const Estimate& est, double a_max, double t,
                const ResidualOptions& opts = {});

struct SolveOptions {
  int max_iterations = 200;
  double rel_tolerance = 1e-6;  ///< accept when e < rel_tolerance (1 + |rho(t_f)|)
  /// Previous plan, tried as an extra start when it ends after t.
  std::optional<CostateSolution> warm_start;
};

/// Multi-start (8 starts, OpenMP-parallel) Levenberg-Marquardt on the
/// residual system.  Among starts meeting the tolerance the earliest t_f wins.
/// Throws NoSolution when no start converges.
CostateSolution solve(const ChaserState& chaser, const Estimate& est, double a_max, double t,
                      const SolveOptions& opts = {});

/// RK4 integration of r'' = u* from sol.t0 to sol.t_f with step dt.  The
/// switching instant, when inside the horizon, is inserted as a sample.
Trajectory rollout(const CostateSolution& sol, const ChaserState& chaser, double a_max, double dt);

/// Chaser state after following the plan from t_from to t_to.
ChaserState advance(const CostateSolution& sol, const ChaserState& chaser, double a_max, double t_from,
                    double t_to, double dt);

}  // namespace vservo
