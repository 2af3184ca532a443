#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vservo/errors.hpp"
#include "vservo/harness.hpp"

namespace vservo {

namespace {

using json = nlohmann::json;

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

std::string path_of(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

double number(const json& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError(name + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(name + ": must be finite");
  return x;
}

template <int N>
Eigen::Matrix<double, N, 1> vector_of(const json& v, const std::string& name) {
  if (!v.is_array() || v.size() != static_cast<std::size_t>(N)) {
    throw ConfigError(name + ": expected an array of " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> out;
  for (int i = 0; i < N; ++i) out(i) = number(v[static_cast<std::size_t>(i)], name);
  return out;
}

UnitQuaternion quaternion_of(const json& v, const std::string& name) {
  const Vec4 c = vector_of<4>(v, name);
  if (std::abs(c.norm() - 1.0) > 1e-6) throw ConfigError(name + ": quaternion [x, y, z, w] must have unit norm");
  return UnitQuaternion::normalized(c);
}

void read(const json& j, const std::string& where, const char* key, double& out) {
  if (j.contains(key)) out = number(j.at(key), path_of(where, key));
}

void read(const json& j, const std::string& where, const char* key, int& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer()) throw ConfigError(path_of(where, key) + ": expected an integer");
  out = v.get<int>();
}

void read(const json& j, const std::string& where, const char* key, bool& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_boolean()) throw ConfigError(path_of(where, key) + ": expected true or false");
  out = v.get<bool>();
}

void read(const json& j, const std::string& where, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(path_of(where, key) + ": expected a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

template <int N>
void read(const json& j, const std::string& where, const char* key, Eigen::Matrix<double, N, 1>& out) {
  if (j.contains(key)) out = vector_of<N>(j.at(key), path_of(where, key));
}

void read(const json& j, const std::string& where, const char* key, UnitQuaternion& out) {
  if (j.contains(key)) out = quaternion_of(j.at(key), path_of(where, key));
}

// Null selects the automatic default (encoded as -1).
void read_auto(const json& j, const std::string& where, const char* key, double& out) {
  if (!j.contains(key)) return;
  out = j.at(key).is_null() ? -1.0 : number(j.at(key), path_of(where, key));
}

FaultKind fault_kind(const json& v, const std::string& name) {
  if (!v.is_string()) throw ConfigError(name + ": expected a string");
  const std::string s = v.get<std::string>();
  if (s == "blackout") return FaultKind::Blackout;
  if (s == "outlier-burst") return FaultKind::OutlierBurst;
  if (s == "occlusion-fraction") return FaultKind::Occlusion;
  throw ConfigError(name + ": unknown fault kind '" + s + "' (blackout, outlier-burst, occlusion-fraction)");
}

}  // namespace

ScenarioConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  only_keys(root, "config",
            {"inertia", "initial_state", "model", "cloud", "faults", "estimator", "guidance", "run", "monte_carlo"});
  ScenarioConfig cfg;
  read(root, "", "inertia", cfg.inertia);

  if (root.contains("initial_state")) {
    const json& s = root.at("initial_state");
    only_keys(s, "initial_state", {"q", "omega", "rho_o", "rho_o_dot", "varrho", "mu"});
    read(s, "initial_state", "q", cfg.initial.q);
    read(s, "initial_state", "omega", cfg.initial.omega);
    read(s, "initial_state", "rho_o", cfg.initial.rho_o);
    read(s, "initial_state", "rho_o_dot", cfg.initial.rho_o_dot);
    read(s, "initial_state", "varrho", cfg.initial.varrho);
    read(s, "initial_state", "mu", cfg.initial.mu);
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    only_keys(m, "model", {"points", "seed"});
    read(m, "model", "points", cfg.model.points);
    read(m, "model", "seed", cfg.model.seed);
  }
  if (root.contains("cloud")) {
    const json& c = root.at("cloud");
    only_keys(c, "cloud", {"points", "noise", "rate", "noise_schedule"});
    read(c, "cloud", "points", cfg.cloud.points);
    read(c, "cloud", "noise", cfg.cloud.noise);
    read(c, "cloud", "rate", cfg.cloud.rate);
    if (c.contains("noise_schedule")) {
      const json& list = c.at("noise_schedule");
      if (!list.is_array()) throw ConfigError("cloud.noise_schedule: expected an array");
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string where = "cloud.noise_schedule[" + std::to_string(i) + "]";
        only_keys(list[i], where, {"time", "noise"});
        if (!list[i].contains("time") || !list[i].contains("noise")) {
          throw ConfigError(where + ": needs time and noise");
        }
        NoiseStep st;
        read(list[i], where, "time", st.time);
        read(list[i], where, "noise", st.noise);
        cfg.cloud.noise_schedule.push_back(st);
      }
    }
  }
  if (root.contains("faults")) {
    const json& list = root.at("faults");
    if (!list.is_array()) throw ConfigError("faults: expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string where = "faults[" + std::to_string(i) + "]";
      only_keys(list[i], where, {"start", "end", "kind", "fraction"});
      if (!list[i].contains("start") || !list[i].contains("end") || !list[i].contains("kind")) {
        throw ConfigError(where + ": needs start, end and kind");
      }
      FaultWindow f;
      read(list[i], where, "start", f.start);
      read(list[i], where, "end", f.end);
      f.kind = fault_kind(list[i].at("kind"), where + ".kind");
      read(list[i], where, "fraction", f.fraction);
      cfg.faults.push_back(f);
    }
  }
  if (root.contains("estimator")) {
    const json& e = root.at("estimator");
    const std::string w = "estimator";
    only_keys(e, w,
              {"w", "Qc", "R0", "P0", "eps_th", "n_max", "alpha_th", "L", "convergence_threshold",
               "gain_projection", "initial_error", "sigma_guess"});
    int win = static_cast<int>(cfg.estimator.w);
    read(e, w, "w", win);
    if (win < 1) throw ConfigError("estimator.w: must be at least 1");
    cfg.estimator.w = static_cast<std::size_t>(win);
    read(e, w, "Qc", cfg.estimator.Qc);
    read(e, w, "R0", cfg.estimator.R0);
    read_auto(e, w, "eps_th", cfg.estimator.eps_th);
    read(e, w, "n_max", cfg.estimator.n_max);
    read_auto(e, w, "alpha_th", cfg.estimator.alpha_th);
    read(e, w, "L", cfg.estimator.L);
    read(e, w, "convergence_threshold", cfg.estimator.convergence_threshold);
    read(e, w, "sigma_guess", cfg.estimator.sigma_guess);
    if (e.contains("gain_projection")) {
      const json& g = e.at("gain_projection");
      const std::string s = g.is_string() ? g.get<std::string>() : "";
      if (s == "boundary") {
        cfg.estimator.projection = GainProjection::Boundary;
      } else if (s == "printed") {
        cfg.estimator.projection = GainProjection::Printed;
      } else if (s == "none") {
        cfg.estimator.projection = GainProjection::None;
      } else {
        throw ConfigError("estimator.gain_projection: expected boundary, printed or none");
      }
    }
    if (e.contains("P0")) {
      const json& p = e.at("P0");
      const std::string pw = "estimator.P0";
      only_keys(p, pw, {"attitude", "rate", "position", "velocity", "sigma", "varrho", "mu"});
      read(p, pw, "attitude", cfg.estimator.P0.attitude);
      read(p, pw, "rate", cfg.estimator.P0.rate);
      read(p, pw, "position", cfg.estimator.P0.position);
      read(p, pw, "velocity", cfg.estimator.P0.velocity);
      read(p, pw, "sigma", cfg.estimator.P0.sigma);
      read(p, pw, "varrho", cfg.estimator.P0.varrho);
      read(p, pw, "mu", cfg.estimator.P0.mu);
    }
    if (e.contains("initial_error")) {
      const json& p = e.at("initial_error");
      const std::string pw = "estimator.initial_error";
      only_keys(p, pw, {"attitude", "position", "rate", "velocity", "varrho", "mu"});
      read(p, pw, "attitude", cfg.estimator.err_attitude);
      read(p, pw, "position", cfg.estimator.err_position);
      read(p, pw, "rate", cfg.estimator.err_rate);
      read(p, pw, "velocity", cfg.estimator.err_velocity);
      read(p, pw, "varrho", cfg.estimator.err_varrho);
      read(p, pw, "mu", cfg.estimator.err_mu);
    }
  }
  if (root.contains("guidance")) {
    const json& g = root.at("guidance");
    const std::string w = "guidance";
    only_keys(g, w, {"enabled", "a_max", "replan_period", "rollout_dt", "chaser_r", "chaser_r_dot"});
    read(g, w, "enabled", cfg.guidance.enabled);
    read(g, w, "a_max", cfg.guidance.a_max);
    read(g, w, "replan_period", cfg.guidance.replan_period);
    read(g, w, "rollout_dt", cfg.guidance.rollout_dt);
    read(g, w, "chaser_r", cfg.guidance.chaser_r);
    read(g, w, "chaser_r_dot", cfg.guidance.chaser_r_dot);
  }
  if (root.contains("run")) {
    const json& r = root.at("run");
    only_keys(r, "run", {"duration", "dt", "seed"});
    read(r, "run", "duration", cfg.run.duration);
    read(r, "run", "dt", cfg.run.dt);
    read(r, "run", "seed", cfg.run.seed);
  }
  if (root.contains("monte_carlo")) {
    const json& m = root.at("monte_carlo");
    only_keys(m, "monte_carlo", {"randomize_inertia", "randomize_attitude"});
    read(m, "monte_carlo", "randomize_inertia", cfg.monte_carlo.randomize_inertia);
    read(m, "monte_carlo", "randomize_attitude", cfg.monte_carlo.randomize_attitude);
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TargetState default_target() {
  TargetState x;
  x.q = UnitQuaternion::from_axis_angle(Vec3(1.0, 1.0, 0.0).normalized(), 0.3);
  x.omega = Vec3(0.03, -0.02, 0.05);
  x.rho_o = Vec3(0.1, -0.05, 3.0);
  x.rho_o_dot = Vec3(0.002, -0.001, -0.003);
  x.sigma = sigma_from_inertia(2.0, 3.0, 4.0);
  x.varrho = Vec3(0.4, 0.1, 0.25);
  x.mu = UnitQuaternion::from_axis_angle(Vec3::UnitZ(), 0.4);
  return x;
}

void ScenarioConfig::validate() const {
  try {
    sigma_from_inertia(inertia.x(), inertia.y(), inertia.z());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("inertia: ") + e.what());
  }
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + ": must be positive");
  };
  positive(cloud.rate, "cloud.rate");
  positive(run.duration, "run.duration");
  positive(run.dt, "run.dt");
  positive(estimator.L, "estimator.L");
  positive(estimator.convergence_threshold, "estimator.convergence_threshold");
  positive(guidance.a_max, "guidance.a_max");
  positive(guidance.rollout_dt, "guidance.rollout_dt");
  if (run.dt > scan_period() + 1e-12) throw ConfigError("run.dt: must not exceed the scan period");
  if (cloud.points < 3) throw ConfigError("cloud.points: must be at least 3");
  if (model.points < 10) throw ConfigError("model.points: must be at least 10");
  if (cloud.noise < 0.0) throw ConfigError("cloud.noise: must be non-negative");
  for (const NoiseStep& s : cloud.noise_schedule) {
    if (s.noise < 0.0 || s.time < 0.0) throw ConfigError("cloud.noise_schedule: time and noise must be non-negative");
  }
  if (estimator.n_max < 1) throw ConfigError("estimator.n_max: must be at least 1");
  if ((estimator.Qc.array() < 0.0).any()) throw ConfigError("estimator.Qc: must be non-negative");
  if ((estimator.R0.array() <= 0.0).any()) throw ConfigError("estimator.R0: must be positive");
  const InitialCovariance& p = estimator.P0;
  for (double v : {p.attitude, p.rate, p.position, p.velocity, p.sigma, p.varrho, p.mu}) {
    if (!(v > 0.0)) throw ConfigError("estimator.P0: variances must be positive");
  }
  if (std::abs(estimator.sigma_guess.x()) >= 1.0 || std::abs(estimator.sigma_guess.y()) >= 1.0) {
    throw ConfigError("estimator.sigma_guess: must lie inside the unit box");
  }
  for (double v : {estimator.err_attitude, estimator.err_position, estimator.err_rate, estimator.err_velocity,
                   estimator.err_varrho, estimator.err_mu}) {
    if (v < 0.0) throw ConfigError("estimator.initial_error: must be non-negative");
  }
  if (guidance.replan_period < 1) throw ConfigError("guidance.replan_period: must be at least 1");
  for (std::size_t i = 0; i < faults.size(); ++i) {
    const FaultWindow& f = faults[i];
    const std::string where = "faults[" + std::to_string(i) + "]";
    if (!(f.start < f.end)) throw ConfigError(where + ": start must precede end");
    if (f.start < 0.0 || f.end > run.duration + 1e-12) throw ConfigError(where + ": window must lie within the run");
    if (f.fraction < 0.0 || f.fraction > 1.0) throw ConfigError(where + ": fraction must lie in [0, 1]");
  }
}

double ScenarioConfig::noise_at(double t) const {
  double sigma = cloud.noise;
  double latest = -1.0;
  for (const NoiseStep& s : cloud.noise_schedule) {
    if (s.time <= t && s.time >= latest) {
      sigma = s.noise;
      latest = s.time;
    }
  }
  return sigma;
}

double ScenarioConfig::eps_threshold(double t) const {
  if (estimator.eps_th > 0.0) return estimator.eps_th;
  const double s = 3.0 * noise_at(t);
  return std::max(s * s, 1e-12);
}

bool ScenarioConfig::fault_active(double t, FaultKind kind, double* fraction) const {
  for (const FaultWindow& f : faults) {
    if (f.kind == kind && t >= f.start && t < f.end) {
      if (fraction != nullptr) *fraction = f.fraction;
      return true;
    }
  }
  return false;
}

long ScenarioConfig::epochs() const {
  return static_cast<long>(std::floor(run.duration * cloud.rate + 1e-9)) + 1;
}

}  // namespace vservo
