#pragma once

#include <optional>
#include <string>
#include <vector>

#include "toncal/dataset_io.hpp"
#include "toncal/frontend.hpp"
#include "toncal/metrics.hpp"
#include "toncal/pipeline.hpp"

namespace toncal {

// One experiment: simulation, front-end, pipeline variant, metrics. Parsed
// from a versioned JSON document; offsets and tolerances are given in ms.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 1;
  sim::SimConfig sim;
  fe::DropoutModel dropout;
  est::PipelineConfig pipeline;
  metrics::CitConfig cit;
  metrics::Align align = metrics::Align::kNone;
  std::string dataset_dir;  // when set, `run` loads instead of simulating
  bool export_tracks = false;
};

// Throws std::invalid_argument naming the offending field.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const io::fs::path& path);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct RunSummary {
  std::optional<int> cit;
  double tpe_rmse = 0.0;
  double ape_rmse = 0.0;
  double are_rmse = 0.0;
  bool any_diverged = false;
  int n_windows = 0;
};

// Writes the sim module's dataset files; byte-identical for a fixed seed.
void cmd_simulate(const ExperimentConfig& config, const io::fs::path& out_dir);

// End-to-end pipeline run; writes windows.csv, traj_est.csv, tpe.csv,
// ape.csv, metrics.json (and tracks.csv when requested).
RunSummary cmd_run(const ExperimentConfig& config, const io::fs::path& out_dir);

struct SweepCell {
  std::string variant;
  double offset_ms = 0.0;
  std::uint64_t seed = 0;
  std::optional<int> cit;
  double tpe_rmse = 0.0;
  double ape_rmse = 0.0;
  double are_rmse = 0.0;
  bool diverged = false;
  std::string error;  // non-empty when the cell failed
};

// Cross product offsets x seeds x {ton, sir}; cells run independently, one
// row each in summary.csv. Per-cell failures are recorded in-row.
std::vector<SweepCell> cmd_sweep(const ExperimentConfig& config,
                                 const std::vector<double>& offsets_ms,
                                 const std::vector<std::uint64_t>& seeds,
                                 const io::fs::path& out_dir, int jobs);

// Derives plot-ready CSVs from a finished run directory. Throws on missing
// inputs.
void cmd_plotdata(const io::fs::path& run_dir);

struct GradCheckReport {
  double mlp = 0.0;
  double its_lstm = 0.0;
  double tpn_lstm = 0.0;
  double visual = 0.0;
  double imu = 0.0;
  double worst() const;
};

GradCheckReport grad_check_report();

}  // namespace toncal
