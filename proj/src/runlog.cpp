#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "vservo/errors.hpp"
#include "vservo/harness.hpp"

namespace vservo {

namespace {

using json = nlohmann::json;

void state_columns(std::vector<std::string>& cols, const std::string& p) {
  for (const char* n : {"q_x", "q_y", "q_z", "q_w", "omega_x", "omega_y", "omega_z", "rho_o_x", "rho_o_y",
                        "rho_o_z", "rho_o_dot_x", "rho_o_dot_y", "rho_o_dot_z", "sigma1", "sigma2", "varrho_x",
                        "varrho_y", "varrho_z", "mu_x", "mu_y", "mu_z", "mu_w"}) {
    cols.push_back(p + n);
  }
}

void state_values(std::vector<double>& row, const TargetState& x) {
  row.insert(row.end(), {x.q.vec().x(), x.q.vec().y(), x.q.vec().z(), x.q.scalar()});
  for (const Vec3* v : {&x.omega, &x.rho_o, &x.rho_o_dot}) row.insert(row.end(), {v->x(), v->y(), v->z()});
  row.insert(row.end(), {x.sigma.s1, x.sigma.s2, x.varrho.x(), x.varrho.y(), x.varrho.z()});
  row.insert(row.end(), {x.mu.vec().x(), x.mu.vec().y(), x.mu.vec().z(), x.mu.scalar()});
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("summary: missing key '") + key + "'");
  const json& v = j.at(key);
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

const std::vector<std::string>& epoch_columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c{"t"};
    state_columns(c, "truth_");
    state_columns(c, "est_");
    for (const char* n : {"P_q", "P_omega", "P_rho_o", "P_rho_o_dot", "P_sigma", "P_varrho", "P_mu"}) c.push_back(n);
    for (int i = 0; i < 6; ++i) c.push_back("z_" + std::to_string(i));
    for (int i = 0; i < 6; ++i) c.push_back("meas_error_" + std::to_string(i));
    for (const char* n : {"fit_error", "iterations", "gamma", "innovation_norm", "R_trace", "ogm_condition",
                          "position_error", "attitude_error", "planned_tf", "residual", "chaser_r_x", "chaser_r_y",
                          "chaser_r_z", "chaser_r_dot_x", "chaser_r_dot_y", "chaser_r_dot_z"}) {
      c.push_back(n);
    }
    return c;
  }();
  return cols;
}

std::vector<double> epoch_row(const EpochRecord& r) {
  std::vector<double> row{r.t};
  row.reserve(epoch_columns().size());
  state_values(row, r.truth);
  state_values(row, r.estimate);
  for (int i = 0; i < 7; ++i) row.push_back(r.P_traces(i));
  for (int i = 0; i < 6; ++i) row.push_back(r.z(i));
  for (int i = 0; i < 6; ++i) row.push_back(r.meas_error(i));
  row.insert(row.end(), {r.fit_error, static_cast<double>(r.iterations), static_cast<double>(r.gamma),
                         r.innovation_norm, r.R_trace, r.ogm_condition, r.position_error, r.attitude_error,
                         r.planned_tf, r.residual});
  for (const Vec3* v : {&r.chaser_r, &r.chaser_r_dot}) row.insert(row.end(), {v->x(), v->y(), v->z()});
  return row;
}

std::string summary_json(const RunSummary& s) {
  json j;
  j["epochs"] = s.epochs;
  j["converged"] = s.converged;
  j["t1"] = finite_or_null(s.t1);
  j["planned"] = s.planned;
  j["plans"] = s.plans;
  j["no_solution"] = s.no_solution;
  j["first_plan_tf"] = finite_or_null(s.first_plan_tf);
  j["plan_position_error"] = finite_or_null(s.plan_position_error);
  j["plan_velocity_error"] = finite_or_null(s.plan_velocity_error);
  j["captured"] = s.captured;
  j["capture_time"] = finite_or_null(s.capture_time);
  j["capture_position_error"] = finite_or_null(s.capture_position_error);
  j["capture_velocity_error"] = finite_or_null(s.capture_velocity_error);
  j["rejected_epochs"] = s.rejected_epochs;
  j["max_abs_sigma"] = finite_or_null(s.max_abs_sigma);
  j["max_abs_gamma"] = finite_or_null(s.max_abs_gamma);
  j["final_position_error"] = finite_or_null(s.final_position_error);
  j["final_attitude_error"] = finite_or_null(s.final_attitude_error);
  return j.dump(2);
}

void export_log(const RunLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto csv_path = dir / "epochs.csv";
  std::FILE* f = std::fopen(csv_path.c_str(), "w");
  if (!f) throw std::runtime_error(csv_path.string() + ": cannot open for writing");
  const auto& cols = epoch_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) std::fprintf(f, i ? ",%s" : "%s", cols[i].c_str());
  std::fputc('\n', f);
  for (const EpochRecord& r : log.epochs) {
    const std::vector<double> row = epoch_row(r);
    for (std::size_t i = 0; i < row.size(); ++i) std::fprintf(f, i ? ",%.17g" : "%.17g", row[i]);
    std::fputc('\n', f);
  }
  const bool ok = std::ferror(f) == 0;
  std::fclose(f);
  if (!ok) throw std::runtime_error(csv_path.string() + ": write failed");

  std::ofstream js(dir / "summary.json");
  js << summary_json(log.summary) << '\n';
  if (!js) throw std::runtime_error((dir / "summary.json").string() + ": write failed");
}

CsvTable read_epochs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) table.header.push_back(cell);
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != table.header.size()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(table.header.size()) + " columns, got " + std::to_string(row.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

RunSummary read_summary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  RunSummary s;
  s.epochs = j.at("epochs").get<long>();
  s.converged = j.at("converged").get<bool>();
  s.t1 = number_or_nan(j, "t1");
  s.planned = j.at("planned").get<bool>();
  s.plans = j.at("plans").get<int>();
  s.no_solution = j.at("no_solution").get<int>();
  s.first_plan_tf = number_or_nan(j, "first_plan_tf");
  s.plan_position_error = number_or_nan(j, "plan_position_error");
  s.plan_velocity_error = number_or_nan(j, "plan_velocity_error");
  s.captured = j.at("captured").get<bool>();
  s.capture_time = number_or_nan(j, "capture_time");
  s.capture_position_error = number_or_nan(j, "capture_position_error");
  s.capture_velocity_error = number_or_nan(j, "capture_velocity_error");
  s.rejected_epochs = j.at("rejected_epochs").get<int>();
  s.max_abs_sigma = number_or_nan(j, "max_abs_sigma");
  s.max_abs_gamma = number_or_nan(j, "max_abs_gamma");
  s.final_position_error = number_or_nan(j, "final_position_error");
  s.final_attitude_error = number_or_nan(j, "final_attitude_error");
  return s;
}

}  // namespace vservo
