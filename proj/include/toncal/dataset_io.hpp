#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "toncal/frontend.hpp"
#include "toncal/metrics.hpp"
#include "toncal/pipeline.hpp"
#include "toncal/sim.hpp"

namespace toncal::io {

namespace fs = std::filesystem;

// Dataset directory: meta.json, imu.csv, frames.csv, landmarks.csv.
// Floating point in dataset files uses 12 significant digits.
void write_dataset(const fs::path& dir, const sim::SimDataset& dataset);
sim::SimDataset load_dataset(const fs::path& dir);

std::string sim_config_to_json(const sim::SimConfig& config);
sim::SimConfig sim_config_from_json(const std::string& text);

void write_tracks_csv(const fs::path& path, const fe::TrackTable& tracks);

// Run artifacts use 17 significant digits so values round-trip exactly.
void write_windows_csv(const fs::path& path, const std::vector<est::WindowReport>& windows);
std::vector<est::WindowReport> read_windows_csv(const fs::path& path);

void write_traj_est_csv(const fs::path& path, const std::vector<est::FrameEstimate>& est,
                        const std::vector<Mat3>& r_gt, const std::vector<Vec3>& p_gt);

struct TrajRow {
  int frame = 0;
  double stamp = 0.0;
  Quat q_est;
  Vec3 p_est;
  Vec3 v_est;
  Quat q_gt;
  Vec3 p_gt;
};
std::vector<TrajRow> read_traj_est_csv(const fs::path& path);

void write_tpe_csv(const fs::path& path, const std::vector<int>& index,
                   const metrics::TpeResult& tpe);
void write_ape_csv(const fs::path& path, const std::vector<int>& frames,
                   const metrics::AteResult& ate);

// Minimal CSV reader: header line + numeric rows.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const;  // throws when missing
};
CsvTable read_csv(const fs::path& path);

std::string format_g12(double v);
std::string format_g17(double v);

}  // namespace toncal::io
