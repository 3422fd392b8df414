#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "toncal/experiment.hpp"
#include "toncal/log.hpp"

namespace {

toncal::ExperimentConfig load_config(const std::string& path, long long seed_override) {
  toncal::ExperimentConfig cfg = toncal::load_experiment_config(path);
  if (seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(seed_override);
    cfg.sim.seed = cfg.seed;
  }
  return cfg;
}

std::vector<double> parse_double_list(const std::string& csv) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos < csv.size()) {
    std::size_t next = csv.find(',', pos);
    if (next == std::string::npos) next = csv.size();
    out.push_back(std::stod(csv.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> out;
  for (double v : parse_double_list(csv)) out.push_back(static_cast<std::uint64_t>(v));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"camera-IMU temporal calibration experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", run_dir;
  long long seed_override = -1;
  int jobs = 2;
  std::string offsets_csv = "-20,-10,10,20";
  std::string seeds_csv = "1,2,3";

  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic dataset directory");
  sim_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  sim_cmd->add_option("--out", out_dir, "output directory");
  sim_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* run_cmd = app.add_subcommand("run", "run one pipeline variant end to end");
  run_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  run_cmd->add_option("--out", out_dir, "output directory");
  run_cmd->add_option("--seed", seed_override, "override the config seed");

  auto* sweep_cmd = app.add_subcommand("sweep", "offset x seed x {ton,sir} sweep");
  sweep_cmd->add_option("--config", config_path, "experiment config JSON")->required();
  sweep_cmd->add_option("--out", out_dir, "output directory");
  sweep_cmd->add_option("--offsets", offsets_csv, "comma-separated offsets in ms");
  sweep_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds");
  sweep_cmd->add_option("--jobs", jobs, "parallel sweep cells");

  auto* plot_cmd = app.add_subcommand("plotdata", "derive plot-ready CSVs from a run dir");
  plot_cmd->add_option("--run", run_dir, "finished run directory")->required();

  auto* grad_cmd = app.add_subcommand("grad-check", "verify analytic Jacobians");
  (void)grad_cmd;

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      toncal::cmd_simulate(load_config(config_path, seed_override), out_dir);
    } else if (run_cmd->parsed()) {
      toncal::cmd_run(load_config(config_path, seed_override), out_dir);
    } else if (sweep_cmd->parsed()) {
      const auto cells =
          toncal::cmd_sweep(load_config(config_path, seed_override),
                            parse_double_list(offsets_csv), parse_seed_list(seeds_csv), out_dir,
                            jobs);
      int failed = 0;
      for (const auto& c : cells) failed += c.error.empty() ? 0 : 1;
      std::printf("sweep: %zu cells, %d failed, summary at %s/summary.csv\n", cells.size(),
                  failed, out_dir.c_str());
    } else if (plot_cmd->parsed()) {
      toncal::cmd_plotdata(run_dir);
      std::printf("plotdata: wrote traj_xy, td_error_vs_time, ape_vs_time, tpe_vs_time\n");
    } else if (grad_cmd->parsed()) {
      const auto rep = toncal::grad_check_report();
      std::printf("mlp(3,5,5,2)        max rel err %.3g\n", rep.mlp);
      std::printf("lstm(2,2,2) bptt    max rel err %.3g\n", rep.its_lstm);
      std::printf("lstm(1,2,1) bptt    max rel err %.3g\n", rep.tpn_lstm);
      std::printf("visual factor       max rel err %.3g\n", rep.visual);
      std::printf("imu factor          max rel err %.3g\n", rep.imu);
      std::printf("worst               %.3g (%s)\n", rep.worst(),
                  rep.worst() < 1e-4 ? "ok" : "FAIL");
      return rep.worst() < 1e-4 ? 0 : 1;
    }
  } catch (const std::exception& e) {
    TONCAL_ERROR("%s", e.what());
    return 1;
  }
  return 0;
}
