#pragma once

// Point-to-point ICP against a densely sampled surface model.
//
// The correspondence search and the closed-form alignment follow the
// cloud-to-model convention  A(eta) c + rho ~ d.  register_cloud() takes and
// returns the grasp-frame pose in the camera frame (model-to-cloud), which
// is the inverse transform; it converts at the boundary.

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "vservo/estimator.hpp"
#include "vservo/kdtree.hpp"
#include "vservo/quaternion.hpp"
#include "vservo/types.hpp"

namespace vservo {

struct PointCloud {
  std::vector<Vec3> points;  ///< camera frame {A}, m
  double epoch = 0.0;        ///< s
};

class SurfaceModel {
 public:
  /// Throws InvalidArgument on an empty or non-finite point set.
  explicit SurfaceModel(std::vector<Vec3> points);

  const std::vector<Vec3>& points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  std::size_t nearest(const Vec3& q) const { return tree_.nearest(q); }
  /// Largest extent of the bounding box diagonal.
  double diameter() const { return diameter_; }

 private:
  std::vector<Vec3> points_;
  KdTree tree_;
  double diameter_ = 0.0;
};

struct PoseMeasurement {
  Vec3 rho_bar = Vec3::Zero();
  UnitQuaternion eta_bar;
  double fit_error = 0.0;  ///< m^2
  int iterations = 0;
  int gamma = 0;
};

struct CoarsePose {
  UnitQuaternion eta;
  Vec3 rho = Vec3::Zero();
};

/// eta0 = mu_hat (x) q_hat, rho0 = rho_o_hat + A(q_hat) varrho_hat.
CoarsePose predict_initial_pose(const Estimate& est);

/// Index of the model point nearest to A(eta) c_i + rho for every cloud
/// point.  OpenMP-parallel over the cloud.
std::vector<std::size_t> correspondence_indices(std::span<const Vec3> cloud, const SurfaceModel& model,
                                                const UnitQuaternion& eta, const Vec3& rho);
/// Single-threaded reference for correspondence_indices().
std::vector<std::size_t> correspondence_indices_serial(std::span<const Vec3> cloud,
                                                       const SurfaceModel& model,
                                                       const UnitQuaternion& eta, const Vec3& rho);

std::vector<Vec3> correspondences(const PointCloud& cloud, const SurfaceModel& model,
                                  const UnitQuaternion& eta, const Vec3& rho);

struct SymmetricEigen4 {
  Vec4 values;   ///< descending
  Mat4 vectors;  ///< columns match values
};

/// Cyclic Jacobi eigendecomposition of a symmetric 4x4 matrix.
SymmetricEigen4 jacobi_eigen(const Mat4& m);

struct HornFit {
  UnitQuaternion eta;
  Vec3 rho = Vec3::Zero();
  double eps = 0.0;  ///< mean squared post-fit distance, m^2
};

/// 4x4 matrix whose dominant eigenvector is the optimal rotation taking C
/// onto D ([scalar, vec] ordering).
Mat4 horn_matrix(std::span<const Vec3> C, std::span<const Vec3> D);

/// Closed-form least squares rigid fit minimizing mean |A(eta) c_i + rho - d_i|^2.
/// Throws InvalidArgument for mismatched or too small sets and AmbiguousFit
/// when the two largest eigenvalues coincide within 1e-9 (relative).
HornFit horn_fit(std::span<const Vec3> C, std::span<const Vec3> D);

/// Mean squared distance |A(eta) c_i + rho - d_i|^2.
double fit_error(std::span<const Vec3> C, std::span<const Vec3> D, const UnitQuaternion& eta,
                 const Vec3& rho);

/// Alternates correspondence search and closed-form fits from the seed pose
/// (grasp frame in the camera frame) until the fit error drops below eps_th
/// (gamma = 1) or n_max iterations pass (gamma = 0).  An iteration that
/// reproduces the previous correspondence set is a fixed point and ends the
/// loop early.  eps_history, when given, receives the per-iteration fit error.
PoseMeasurement register_cloud(const PointCloud& cloud, const SurfaceModel& model,
                               const UnitQuaternion& eta0, const Vec3& rho0, double eps_th,
                               int n_max, std::vector<double>* eps_history = nullptr);

/// Weighted innovation norm |W alpha| with W = diag(I, L I).
double weighted_innovation_norm(const Vec6& innovation, double L);

/// gamma = 0 if the registration already failed, or if both the fit error and
/// the weighted innovation exceed their thresholds.
int fault_detect(const PoseMeasurement& meas, const Vec6& innovation, double eps_th, double alpha_th,
                 double L);

/// Plain-text point files: three whitespace-separated numbers per line, '#'
/// starts a comment line.
std::vector<Vec3> read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path, std::span<const Vec3> points,
                  const std::string& header = {});

}  // namespace vservo
