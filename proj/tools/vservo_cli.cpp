#include <cstdio>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "acceptance.hpp"
#include "vservo/errors.hpp"
#include "vservo/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kNoSolution = 3;

void print_summary(const vservo::RunSummary& s) {
  std::printf("epochs %ld  converged %s  t1 %.2f s  plans %d  captured %s", s.epochs, s.converged ? "yes" : "no", s.t1,
              s.plans, s.captured ? "yes" : "no");
  if (s.captured) {
    std::printf("  t_f %.3f s  |dr| %.2e m  |dv| %.2e m/s", s.capture_time, s.capture_position_error,
                s.capture_velocity_error);
  }
  std::printf("\n");
}

// A run that reached t1 but never produced a plan ended on no-solution.
bool no_solution_end(const vservo::RunSummary& s, bool guidance) {
  return guidance && s.converged && !s.planned && s.no_solution > 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual servoing pipeline: tumbling-target pose estimation and time-optimal interception"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  int trials = 10;
  int only = 0;

  auto* run_cmd = app.add_subcommand("run", "Run one closed-loop scenario");
  run_cmd->add_option("--config", config_path, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--out", out_dir, "Output directory for epochs.csv and summary.json")->required();

  auto* mc_cmd = app.add_subcommand("mc", "Run independent Monte-Carlo trials");
  mc_cmd->add_option("--config", config_path, "Scenario file (JSON)")->required()->check(CLI::ExistingFile);
  mc_cmd->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  mc_cmd->add_option("--out", out_dir, "Output directory (one trial_NNNN subdirectory per trial)")->required();

  auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance suite");
  verify_cmd->add_option("--only", only, "Run a single criterion by number")->check(CLI::Range(0, 8));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const vservo::ScenarioConfig cfg = vservo::load_config(config_path);
      const vservo::RunLog log = vservo::run(cfg);
      vservo::export_log(log, out_dir);
      print_summary(log.summary);
      return no_solution_end(log.summary, cfg.guidance.enabled) ? kNoSolution : 0;
    }
    if (mc_cmd->parsed()) {
      const vservo::ScenarioConfig cfg = vservo::load_config(config_path);
      const std::vector<vservo::RunLog> logs = vservo::run_monte_carlo(cfg, trials, true);
      int failed = 0;
      for (std::size_t i = 0; i < logs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "trial_%04zu", i);
        vservo::export_log(logs[i], std::filesystem::path(out_dir) / name);
        std::printf("%s  ", name);
        print_summary(logs[i].summary);
        if (no_solution_end(logs[i].summary, cfg.guidance.enabled)) ++failed;
      }
      return failed > 0 ? kNoSolution : 0;
    }
    if (verify_cmd->parsed()) {
      return vservo::acceptance::run(std::cout, only) == 0 ? 0 : 1;
    }
  } catch (const vservo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const vservo::NoSolution& e) {
    std::cerr << "no solution: " << e.what() << '\n';
    return kNoSolution;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
