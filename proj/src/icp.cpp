#include "vservo/icp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "vservo/errors.hpp"

namespace vservo {

SurfaceModel::SurfaceModel(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) {
    throw InvalidArgument("surface model has no points");
  }
  Vec3 lo = points_.front();
  Vec3 hi = points_.front();
  for (const Vec3& p : points_) {
    if (!p.allFinite()) {
      throw InvalidArgument("surface model contains non-finite coordinates");
    }
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  diameter_ = (hi - lo).norm();
  tree_ = KdTree(points_);
}

CoarsePose predict_initial_pose(const Estimate& est) {
  return CoarsePose{est.x.grasp_attitude(), est.x.grasp_position()};
}

std::vector<std::size_t> correspondence_indices(std::span<const Vec3> cloud, const SurfaceModel& model,
                                                const UnitQuaternion& eta, const Vec3& rho) {
  const Mat3 A = rotation_matrix(eta);
  const auto m = static_cast<std::ptrdiff_t>(cloud.size());
  std::vector<std::size_t> out(cloud.size());
#pragma omp parallel for schedule(static) if (m > 256)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    out[i] = model.nearest(A * cloud[i] + rho);
  }
  return out;
}

std::vector<std::size_t> correspondence_indices_serial(std::span<const Vec3> cloud,
                                                       const SurfaceModel& model,
                                                       const UnitQuaternion& eta, const Vec3& rho) {
  const Mat3 A = rotation_matrix(eta);
  std::vector<std::size_t> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    out[i] = model.nearest(A * cloud[i] + rho);
  }
  return out;
}

std::vector<Vec3> correspondences(const PointCloud& cloud, const SurfaceModel& model,
                                  const UnitQuaternion& eta, const Vec3& rho) {
  const auto ids = correspondence_indices(cloud.points, model, eta, rho);
  std::vector<Vec3> d(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    d[i] = model.points()[ids[i]];
  }
  return d;
}

SymmetricEigen4 jacobi_eigen(const Mat4& input) {
  Mat4 a = 0.5 * (input + input.transpose());
  Mat4 v = Mat4::Identity();
  const double scale = std::max(a.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        off += a(p, q) * a(p, q);
      }
    }
    if (std::sqrt(off) <= 1e-17 * scale) {
      break;
    }
    for (int p = 0; p < 4; ++p) {
      for (int q = p + 1; q < 4; ++q) {
        if (a(p, q) == 0.0) {
          continue;
        }
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 4; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < 4; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < 4; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::array<int, 4> order{0, 1, 2, 3};
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  SymmetricEigen4 out;
  for (int k = 0; k < 4; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

Mat4 horn_matrix(std::span<const Vec3> C, std::span<const Vec3> D) {
  const double m = static_cast<double>(C.size());
  Vec3 c_o = Vec3::Zero();
  Vec3 d_o = Vec3::Zero();
  for (std::size_t i = 0; i < C.size(); ++i) {
    c_o += C[i];
    d_o += D[i];
  }
  c_o /= m;
  d_o /= m;
  Mat3 N = Mat3::Zero();
  for (std::size_t i = 0; i < C.size(); ++i) {
    N += (C[i] - c_o) * (D[i] - d_o).transpose();
  }
  N /= m;
  const double tr = N.trace();
  const Vec3 n(N(1, 2) - N(2, 1), N(2, 0) - N(0, 2), N(0, 1) - N(1, 0));
  Mat4 M;
  M(0, 0) = tr;
  M.block<1, 3>(0, 1) = n.transpose();
  M.block<3, 1>(1, 0) = n;
  M.block<3, 3>(1, 1) = N + N.transpose() - tr * Mat3::Identity();
  return M;
}

double fit_error(std::span<const Vec3> C, std::span<const Vec3> D, const UnitQuaternion& eta,
                 const Vec3& rho) {
  const Mat3 A = rotation_matrix(eta);
  double s = 0.0;
  for (std::size_t i = 0; i < C.size(); ++i) {
    s += (A * C[i] + rho - D[i]).squaredNorm();
  }
  return s / static_cast<double>(C.size());
}

HornFit horn_fit(std::span<const Vec3> C, std::span<const Vec3> D) {
  if (C.size() != D.size()) {
    throw InvalidArgument("horn_fit: point sets differ in size");
  }
  if (C.size() < 3) {
    throw InvalidArgument("horn_fit: at least three point pairs are required");
  }
  const SymmetricEigen4 es = jacobi_eigen(horn_matrix(C, D));
  const double gap = es.values(0) - es.values(1);
  if (!(gap > 1e-9 * std::max(std::abs(es.values(0)), std::numeric_limits<double>::min()))) {
    throw AmbiguousFit("horn_fit: dominant eigenvalue is not simple (degenerate geometry)");
  }
  const Vec4 v = es.vectors.col(0);
  HornFit fit;
  fit.eta = UnitQuaternion::normalized(v.tail<3>(), v(0));
  Vec3 c_o = Vec3::Zero();
  Vec3 d_o = Vec3::Zero();
  for (std::size_t i = 0; i < C.size(); ++i) {
    c_o += C[i];
    d_o += D[i];
  }
  c_o /= static_cast<double>(C.size());
  d_o /= static_cast<double>(D.size());
  fit.rho = d_o - rotation_matrix(fit.eta) * c_o;
  fit.eps = fit_error(C, D, fit.eta, fit.rho);
  return fit;
}

PoseMeasurement register_cloud(const PointCloud& cloud, const SurfaceModel& model,
                               const UnitQuaternion& eta0, const Vec3& rho0, double eps_th, int n_max,
                               std::vector<double>* eps_history) {
  if (!(eps_th > 0.0) || n_max < 1) {
    throw InvalidArgument("register_cloud: eps_th must be positive and n_max at least 1");
  }
  PoseMeasurement out;
  out.eta_bar = eta0;
  out.rho_bar = rho0;
  out.fit_error = std::numeric_limits<double>::infinity();
  if (cloud.points.size() < 3) {
    return out;
  }

  // Cloud-to-model transform is the inverse of the grasp-frame pose.
  UnitQuaternion eta = quat_inverse(eta0);
  Vec3 rho = -(rotation_matrix(eta) * rho0);
  std::vector<std::size_t> previous;
  std::vector<Vec3> D(cloud.points.size());
  for (int n = 1; n <= n_max; ++n) {
    const auto ids = correspondence_indices(cloud.points, model, eta, rho);
    if (ids == previous) {
      break;  // fixed point: further iterations repeat the same fit
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      D[i] = model.points()[ids[i]];
    }
    HornFit fit;
    try {
      fit = horn_fit(cloud.points, D);
    } catch (const AmbiguousFit&) {
      out.gamma = 0;
      return out;
    }
    eta = fit.eta;
    rho = fit.rho;
    out.iterations = n;
    out.fit_error = fit.eps;
    out.eta_bar = quat_inverse(eta);
    out.rho_bar = -(rotation_matrix(out.eta_bar) * rho);
    if (eps_history != nullptr) {
      eps_history->push_back(fit.eps);
    }
    if (fit.eps < eps_th) {
      out.gamma = 1;
      return out;
    }
    previous = ids;
  }
  out.gamma = 0;
  return out;
}

double weighted_innovation_norm(const Vec6& innovation, double L) {
  return std::sqrt(innovation.head<3>().squaredNorm() + L * L * innovation.tail<3>().squaredNorm());
}

int fault_detect(const PoseMeasurement& meas, const Vec6& innovation, double eps_th, double alpha_th,
                 double L) {
  if (!(L > 0.0)) {
    throw InvalidArgument("fault_detect: characteristic length must be positive");
  }
  if (meas.gamma == 0) {
    return 0;
  }
  if (meas.fit_error >= eps_th && weighted_innovation_norm(innovation, L) >= alpha_th) {
    return 0;
  }
  return 1;
}

std::vector<Vec3> read_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidArgument("cannot open point file " + path.string());
  }
  std::vector<Vec3> pts;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') {
      continue;
    }
    std::istringstream ss(line);
    Vec3 p;
    std::string extra;
    if (!(ss >> p.x() >> p.y() >> p.z()) || (ss >> extra) || !p.allFinite()) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) +
                            ": expected three finite numbers");
    }
    pts.push_back(p);
  }
  return pts;
}

void write_points(const std::filesystem::path& path, std::span<const Vec3> points,
                  const std::string& header) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidArgument("cannot write point file " + path.string());
  }
  if (!header.empty()) {
    out << "# " << header << '\n';
  }
  out << std::setprecision(17);
  for (const Vec3& p : points) {
    out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  }
}

}  // namespace vservo
