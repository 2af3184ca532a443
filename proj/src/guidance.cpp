#include "vservo/guidance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>

#include "vservo/errors.hpp"

namespace vservo {

namespace {

constexpr double kSingular = 1e-12;

// Control in plan-local time s (p = -c1 s + c2l).  side < 0 takes the limit
// from the left at a zero of p, side > 0 from the right.
Vec3 control_local(double s, const Vec3& c1, const Vec3& c2l, double a_max, int side) {
  const Vec3 p = c2l - c1 * s;
  const double n = p.norm();
  const double scale = std::max(1.0, c1.norm() * std::abs(s) + c2l.norm());
  if (n > kSingular * scale) return -a_max * p / n;
  const double k = c1.norm();
  if (k == 0.0) throw InvalidArgument("control_at: c1 = c2 = 0, control direction undefined");
  // p(s - delta) ~ +c1 delta, p(s + delta) ~ -c1 delta.
  return side > 0 ? Vec3(a_max * c1 / k) : Vec3(-a_max * c1 / k);
}

struct GaussRule {
  std::array<double, 20> x{};
  std::array<double, 20> w{};
};

const GaussRule& gauss20() {
  static const GaussRule rule = [] {
    GaussRule g;
    constexpr int n = 20;
    for (int i = 0; i < n; ++i) {
      double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      g.x[i] = z;
      g.w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return g;
  }();
  return rule;
}

ControlIntegrals gauss_local(const Vec3& c1, const Vec3& c2l, double T, double a_max) {
  const GaussRule& g = gauss20();
  ControlIntegrals out;
  const double half = 0.5 * T;
  for (std::size_t i = 0; i < g.x.size(); ++i) {
    const double s = half * (1.0 + g.x[i]);
    const Vec3 u = control_local(s, c1, c2l, a_max, 0);
    out.dv += half * g.w[i] * u;
    out.dr += half * g.w[i] * (T - s) * u;
  }
  return out;
}

// Closed forms with sigma = s - s*, d = |p(s*)|, k = |c1|, l = sqrt(d^2 + k^2 sigma^2):
//   int u      = -a [ p_hat* d asinh(k sigma/d)/k - c1 l/k^2 ]
//   int sigma u = -a [ p_hat* d l/k^2 - c1 (sigma l/(2k^2) - d^2 asinh(k sigma/d)/(2k^3)) ]
ControlIntegrals closed_form_local(const Vec3& c1, const Vec3& c2l, double T, double a_max) {
  ControlIntegrals out;
  if (T <= 0.0) return out;
  const double k = c1.norm();
  const double cn = c2l.norm();
  if (k == 0.0 && cn == 0.0) throw InvalidArgument("integrate_control: c1 = c2 = 0");
  if (k <= 1e-14 * cn) {
    const Vec3 u = -a_max * c2l / cn;
    out.dv = u * T;
    out.dr = u * (0.5 * T * T);
    return out;
  }
  const double s_star = c1.dot(c2l) / (k * k);
  // Far from the switch the integrand is smooth and the closed form cancels
  // badly; Gauss-Legendre is exact to roundoff there.
  if (std::abs(s_star - 0.5 * T) > 10.0 * T) return gauss_local(c1, c2l, T, a_max);

  const Vec3 p_star = c2l - c1 * s_star;
  const double d = p_star.norm();
  const Vec3 p_hat = d > 0.0 ? Vec3(p_star / d) : Vec3::Zero();
  const double k2 = k * k;
  const double k3 = k2 * k;
  auto g = [&](double sg) { return d > 1e-300 ? d * std::asinh(k * sg / d) : 0.0; };
  auto ell = [&](double sg) { return std::hypot(d, k * sg); };
  auto F0 = [&](double sg) -> Vec3 { return -a_max * (p_hat * (g(sg) / k) - c1 * (ell(sg) / k2)); };
  auto F1 = [&](double sg) -> Vec3 {
    const double l = ell(sg);
    return -a_max * (p_hat * (d * l / k2) - c1 * (sg * l / (2.0 * k2) - d * g(sg) / (2.0 * k3)));
  };
  const double sa = -s_star;
  const double sb = T - s_star;
  out.dv = F0(sb) - F0(sa);
  out.dr = (T - s_star) * out.dv - (F1(sb) - F1(sa));
  return out;
}

void simpson_segment(const Vec3& c1, const Vec3& c2l, double T, double a_max, double lo, double hi,
                     int panels, ControlIntegrals& acc) {
  if (hi <= lo) return;
  const int n = 2 * panels;
  const double h = (hi - lo) / n;
  for (int i = 0; i <= n; ++i) {
    const double s = lo + i * h;
    const int side = i == 0 ? 1 : (i == n ? -1 : 0);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    const Vec3 u = control_local(s, c1, c2l, a_max, side);
    acc.dv += (w * h / 3.0) * u;
    acc.dr += (w * h / 3.0) * (T - s) * u;
  }
}

ControlIntegrals simpson_local(const Vec3& c1, const Vec3& c2l, double T, double a_max, int panels) {
  if (panels < 1) throw InvalidArgument("integrate_control_simpson: panels must be >= 1");
  ControlIntegrals out;
  if (T <= 0.0) return out;
  const double k = c1.norm();
  double split = -1.0;
  if (k > 0.0) split = c1.dot(c2l) / (k * k);
  if (split > 0.0 && split < T) {
    simpson_segment(c1, c2l, T, a_max, 0.0, split, panels, out);
    simpson_segment(c1, c2l, T, a_max, split, T, panels, out);
  } else {
    simpson_segment(c1, c2l, T, a_max, 0.0, T, panels, out);
  }
  return out;
}

ControlIntegrals integrals_local(const Vec3& c1, const Vec3& c2l, double T, double a_max,
                                 const ResidualOptions& opts) {
  return opts.quadrature == Quadrature::Simpson ? simpson_local(c1, c2l, T, a_max, opts.simpson_panels)
                                                : closed_form_local(c1, c2l, T, a_max);
}

// Residuals in plan-local variables y = [c1; c2l; log T].  The eighth entry
// fixes the scale of (c1, c2l), which the other seven are invariant to.
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat87 = Eigen::Matrix<double, 8, 7>;

struct LocalProblem {
  const ChaserState* chaser;
  TargetPredictor* target;
  double a_max;
  double t;
  double log_T_min;
  double log_T_max;

  Vec8 eval(const Vec7& y) const {
    const Vec3 c1 = y.segment<3>(0);
    const Vec3 c2l = y.segment<3>(3);
    const double T = std::exp(y(6));
    Vec8 r;
    const GraspPrediction tgt = target->at(t + T);
    ControlIntegrals ints;
    if (c1.squaredNorm() + c2l.squaredNorm() > 0.0) ints = closed_form_local(c1, c2l, T, a_max);
    r.segment<3>(0) = chaser->r_dot + ints.dv - tgt.rho_dot;
    r.segment<3>(3) = chaser->r + chaser->r_dot * T + ints.dr - tgt.rho;
    r(6) = (c2l.norm() - (c2l - c1 * T).norm()) * a_max + c1.dot(tgt.rho_dot - chaser->r_dot);
    r(7) = c1.squaredNorm() + c2l.squaredNorm() - 1.0;
    return r;
  }

  void clamp(Vec7& y) const { y(6) = std::clamp(y(6), log_T_min, log_T_max); }
};

struct LmResult {
  Vec7 y = Vec7::Zero();
  double cost = std::numeric_limits<double>::infinity();
};

LmResult levenberg_marquardt(const LocalProblem& prob, Vec7 y, int max_iterations, double target_norm) {
  prob.clamp(y);
  Vec8 r = prob.eval(y);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations && std::sqrt(cost) > target_norm; ++it) {
    Mat87 J;
    for (int j = 0; j < 7; ++j) {
      const double h = 1e-7 * std::max(1.0, std::abs(y(j)));
      Vec7 yp = y, ym = y;
      yp(j) += h;
      ym(j) -= h;
      J.col(j) = (prob.eval(yp) - prob.eval(ym)) / (2.0 * h);
    }
    const Mat7 A = J.transpose() * J;
    const Vec7 g = J.transpose() * r;
    bool accepted = false;
    while (lambda < 1e16) {
      Mat7 M = A;
      M.diagonal() += lambda * (A.diagonal().array() + 1e-12).matrix();
      Vec7 step = -M.ldlt().solve(g);
      if (!step.allFinite()) {
        lambda *= 4.0;
        continue;
      }
      if (std::abs(step(6)) > 1.0) step *= 1.0 / std::abs(step(6));
      Vec7 y_new = y + step;
      prob.clamp(y_new);
      const Vec8 r_new = prob.eval(y_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        const double moved = (y_new - y).norm();
        y = y_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda / 3.0, 1e-15);
        accepted = true;
        if (moved < 1e-15 * (1.0 + y.norm())) it = max_iterations;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
  }
  return {y, cost};
}

Vec3 unit_or(const Vec3& v, const Vec3& fallback) {
  const double n = v.norm();
  return n > 0.0 ? Vec3(v / n) : fallback;
}

// Integrates the chaser from plan-local s_from to s_to.  Past T the control
// is zero (coast).
ChaserState integrate_plan(const Vec3& c1, const Vec3& c2l, double T, double a_max, double s_from,
                           double s_to, double dt, ChaserState x, double t0,
                           std::vector<TrajectorySample>* samples) {
  if (!(dt > 0.0)) throw InvalidArgument("rollout: dt must be positive");
  std::vector<double> knots;
  const double end = s_to;
  for (long i = 0;; ++i) {
    const double s = s_from + static_cast<double>(i) * dt;
    if (s >= end) break;
    knots.push_back(s);
  }
  knots.push_back(end);
  const double k = c1.norm();
  if (k > 0.0) {
    const double s_star = c1.dot(c2l) / (k * k);
    if (s_star > s_from && s_star < end) knots.push_back(s_star);
    // Geometric grading toward a sharp turn of width |p(s*)| / |c1|.
    const double width = (c2l - c1 * s_star).norm() / k;
    for (double d = 0.25 * width; width < dt && d < 4.0 * dt; d *= 1.5) {
      for (double s : {s_star - d, s_star + d}) {
        if (s > s_from && s < end) knots.push_back(s);
      }
    }
  }
  if (T > s_from && T < end) knots.push_back(T);
  std::sort(knots.begin(), knots.end());
  const double merge = 1e-12 * std::max(1.0, std::abs(end));
  knots.erase(std::unique(knots.begin(), knots.end(),
                          [merge](double a, double b) { return std::abs(a - b) <= merge; }),
              knots.end());
  if (knots.back() != end) knots.back() = end;

  auto u_at = [&](double s, int side) -> Vec3 {
    if (s > T || (s == T && side > 0)) return Vec3::Zero();
    return control_local(s, c1, c2l, a_max, side);
  };
  if (samples) samples->push_back({t0 + knots.front(), x.r, x.r_dot, u_at(knots.front(), 1)});
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double sa = knots[i];
    const double sb = knots[i + 1];
    const double h = sb - sa;
    const Vec3 ua = u_at(sa, 1);
    const Vec3 um = u_at(0.5 * (sa + sb), 0);
    const Vec3 ub = u_at(sb, -1);
    // r'' = u(s) has no state dependence, so RK4 reduces to Simpson on u.
    const Vec3 v1 = x.r_dot;
    const Vec3 v2 = x.r_dot + 0.5 * h * ua;
    const Vec3 v3 = x.r_dot + 0.5 * h * um;
    const Vec3 v4 = x.r_dot + h * um;
    x.r += h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    x.r_dot += h / 6.0 * (ua + 4.0 * um + ub);
    if (samples) samples->push_back({t0 + sb, x.r, x.r_dot, ub});
  }
  return x;
}

}  // namespace

Vec3 control_at(double tau, const Vec3& c1, const Vec3& c2, double a_max) {
  return control_local(tau, c1, c2, a_max, -1);
}

double hamiltonian_residual(const Vec3& c1, const Vec3& c2, double t, double t_f, const Vec3& v_mismatch,
                            double a_max) {
  return ((c1 * t - c2).norm() - (c1 * t_f - c2).norm()) * a_max + c1.dot(v_mismatch);
}

double hamiltonian(double tau, const Vec3& c1, const Vec3& c2, const Vec3& r_dot, const Vec3& u) {
  const Vec3 p = -c1 * tau + c2;
  return 1.0 + c1.dot(r_dot) + p.dot(u);
}

ControlIntegrals integrate_control(const Vec3& c1, const Vec3& c2, double t, double t_f, double a_max) {
  return closed_form_local(c1, c2 - c1 * t, t_f - t, a_max);
}

ControlIntegrals integrate_control_simpson(const Vec3& c1, const Vec3& c2, double t, double t_f,
                                           double a_max, int panels) {
  return simpson_local(c1, c2 - c1 * t, t_f - t, a_max, panels);
}

GraspPrediction predict_target(const Estimate& est, double t_f, double dt) {
  if (t_f < est.time) throw InvalidArgument("predict_target: t_f precedes the estimate time");
  if (!(dt > 0.0)) throw InvalidArgument("predict_target: dt must be positive");
  const TargetState x = propagate(est.x, t_f - est.time, dt);
  return {x.grasp_position(), x.grasp_velocity()};
}

TargetPredictor::TargetPredictor(const Estimate& est, double grid_step) : t0_(est.time), h_(grid_step) {
  if (!(grid_step > 0.0)) throw InvalidArgument("TargetPredictor: grid step must be positive");
  nodes_.push_back(est.x);
}

GraspPrediction TargetPredictor::at(double t_f) {
  if (t_f < t0_) throw InvalidArgument("TargetPredictor: t_f precedes the estimate time");
  const double span = t_f - t0_;
  const auto j = static_cast<std::size_t>(std::floor(span / h_));
  while (nodes_.size() <= j) nodes_.push_back(propagate(nodes_.back(), h_));
  const double rem = span - static_cast<double>(j) * h_;
  const TargetState x = rem > 0.0 ? propagate(nodes_[j], rem) : nodes_[j];
  return {x.grasp_position(), x.grasp_velocity()};
}

Vec7 residual_vector(const Vec7& chi, const ChaserState& chaser, TargetPredictor& target, double a_max,
                     double t, const ResidualOptions& opts) {
  const Vec3 c1 = chi.segment<3>(0);
  const Vec3 c2 = chi.segment<3>(3);
  const double t_f = chi(6);
  if (!(t_f > t)) throw InvalidArgument("residual: t_f must exceed t");
  const double T = t_f - t;
  const Vec3 c2l = c2 - c1 * t;
  const GraspPrediction tgt = target.at(t_f);
  const ControlIntegrals ints = integrals_local(c1, c2l, T, a_max, opts);
  Vec7 r;
  r.segment<3>(0) = chaser.r_dot + ints.dv - tgt.rho_dot;
  r.segment<3>(3) = chaser.r + chaser.r_dot * T + ints.dr - tgt.rho;
  r(6) = hamiltonian_residual(c1, c2, t, t_f, tgt.rho_dot - chaser.r_dot, a_max);
  return r;
}

double residual(const Vec7& chi, const ChaserState& chaser, const Estimate& est, double a_max, double t,
                const ResidualOptions& opts) {
  TargetPredictor target(est);
  return residual_vector(chi, chaser, target, a_max, t, opts).norm();
}

CostateSolution solve(const ChaserState& chaser, const Estimate& est, double a_max, double t,
                      const SolveOptions& opts) {
  if (!(a_max > 0.0)) throw InvalidArgument("solve: a_max must be positive");
  if (t < est.time) throw InvalidArgument("solve: t precedes the estimate time");

  TargetPredictor probe(est);
  const GraspPrediction now = probe.at(t);
  const Vec3 dp0 = now.rho - chaser.r;
  const Vec3 dv0 = now.rho_dot - chaser.r_dot;
  if (dp0.norm() < 1e-9 && dv0.norm() < 1e-9) {
    CostateSolution sol;
    sol.c2 = -unit_or(dp0, Vec3::UnitX());
    sol.t0 = t;
    sol.t_f = t + 1e-9;
    sol.residual = 0.0;
    sol.starts_converged = 1;
    return sol;
  }
  const double T0 = std::max({std::sqrt(2.0 * dp0.norm() / a_max), dv0.norm() / a_max, 1e-3});
  const double log_T_max = std::log(std::max(1000.0, 100.0 * T0));

  struct Start {
    double scale;
    double frac;
    int dir;
  };
  static constexpr std::array<Start, 8> kStarts{{{1.0, 0.5, 0},
                                                 {2.0, 0.5, 0},
                                                 {4.0, 0.5, 0},
                                                 {1.0, 0.5, 1},
                                                 {2.0, 0.5, 1},
                                                 {4.0, 0.5, 1},
                                                 {1.5, 0.3, 0},
                                                 {3.0, 0.7, 0}}};

  const bool warm = opts.warm_start && opts.warm_start->t_f > t;
  const int n_starts = static_cast<int>(kStarts.size()) + (warm ? 1 : 0);
  std::array<CostateSolution, kStarts.size() + 1> results;
  std::array<bool, kStarts.size() + 1> ok{};
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n_starts; ++i) {
    TargetPredictor target(est);
    Vec7 y;
    if (i < static_cast<int>(kStarts.size())) {
      const Start& st = kStarts[static_cast<std::size_t>(i)];
      const double T = st.scale * T0;
      const GraspPrediction tgt = target.at(t + T);
      const Vec3 need_p = tgt.rho - chaser.r - chaser.r_dot * T;
      const Vec3 need_v = tgt.rho_dot - chaser.r_dot;
      const Vec3 b1 = unit_or(need_p, unit_or(need_v, Vec3::UnitX()));
      const Vec3 b = st.dir == 0 ? b1 : unit_or(need_p / T + need_v, b1);
      Vec3 c2l = -b;
      Vec3 c1 = -b / (st.frac * T);
      const double n = std::sqrt(c1.squaredNorm() + c2l.squaredNorm());
      y << c1 / n, c2l / n, std::log(T);
    } else {
      const CostateSolution& prev = *opts.warm_start;
      const Vec3 c2l = prev.c2 - prev.c1 * t;
      const double n = std::sqrt(prev.c1.squaredNorm() + c2l.squaredNorm());
      if (n > 0.0) {
        y << prev.c1 / n, c2l / n, std::log(prev.t_f - t);
      } else {
        y << Vec3::Zero(), -Vec3::UnitX(), std::log(prev.t_f - t);
      }
    }

    LocalProblem prob{&chaser, &target, a_max, t, std::log(1e-9), log_T_max};
    const LmResult lm = levenberg_marquardt(prob, y, opts.max_iterations, 1e-14);

    CostateSolution sol;
    sol.c1 = lm.y.segment<3>(0);
    sol.c2 = lm.y.segment<3>(3) + sol.c1 * t;
    sol.t0 = t;
    sol.t_f = t + std::exp(lm.y(6));
    Vec7 chi;
    chi << sol.c1, sol.c2, sol.t_f;
    sol.residual = residual_vector(chi, chaser, target, a_max, t).norm();
    const double rho_norm = target.at(sol.t_f).rho.norm();
    results[static_cast<std::size_t>(i)] = sol;
    ok[static_cast<std::size_t>(i)] =
        std::isfinite(sol.residual) && sol.residual < opts.rel_tolerance * (1.0 + rho_norm);
  }

  int converged = 0;
  int best = -1;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_starts); ++i) {
    if (!ok[i]) continue;
    ++converged;
    if (best < 0 || results[i].t_f < results[static_cast<std::size_t>(best)].t_f) best = static_cast<int>(i);
  }
  if (best < 0) {
    double lowest = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_starts; ++i) lowest = std::min(lowest, results[static_cast<std::size_t>(i)].residual);
    throw NoSolution("guidance solve: no start met the tolerance (best residual " + std::to_string(lowest) +
                     ")");
  }
  CostateSolution sol = results[static_cast<std::size_t>(best)];
  sol.starts_converged = converged;
  return sol;
}

Trajectory rollout(const CostateSolution& sol, const ChaserState& chaser, double a_max, double dt) {
  Trajectory traj;
  traj.a_max = a_max;
  const double T = sol.t_f - sol.t0;
  const Vec3 c2l = sol.c2 - sol.c1 * sol.t0;
  if (sol.c1.isZero(0.0) && c2l.isZero(0.0)) throw InvalidArgument("rollout: c1 = c2 = 0");
  integrate_plan(sol.c1, c2l, T, a_max, 0.0, T, dt, chaser, sol.t0, &traj.samples);
  return traj;
}

ChaserState advance(const CostateSolution& sol, const ChaserState& chaser, double a_max, double t_from,
                    double t_to, double dt) {
  if (t_to < t_from) throw InvalidArgument("advance: t_to precedes t_from");
  if (t_to == t_from) return chaser;
  const double T = sol.t_f - sol.t0;
  const Vec3 c2l = sol.c2 - sol.c1 * sol.t0;
  return integrate_plan(sol.c1, c2l, T, a_max, t_from - sol.t0, t_to - sol.t0, dt, chaser, sol.t0, nullptr);
}

}  // namespace vservo
