#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toncal/estimator.hpp"
#include "toncal/frontend.hpp"
#include "toncal/nets.hpp"

namespace toncal::est {

enum class Variant { kTon, kSir, kEkf, kFvonOnly, kTpnOnly };

const char* variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct PipelineConfig {
  Variant variant = Variant::kTon;
  int window = 10;
  int stride = 5;
  double td_init = 0.0;
  double td_prior_var = 1e-6;  // TPN factor variance, s^2 (default (1 ms)^2)
  double rw_prior_var = 1e-6;  // SIR random-walk prior variance, s^2
  int max_features = 60;
  int min_track_obs = 2;  // per window; shorter tracks are skipped
  int tpn_buffer_cap = 30;
  int its_max_sequences = 32;
  // FVON predictions are used only once the training loss (normalized MSE)
  // is below these gates; otherwise the feature takes the zero fallback.
  double its_quality_gate = 0.02;
  double f2f_quality_gate = 0.05;
  std::uint64_t net_seed = 7;
  nets::TrainConfig its_train = nets::TrainConfig::its_default();
  nets::TrainConfig f2f_train = nets::TrainConfig::f2f_default();
  nets::TrainConfig tpn_train = nets::TrainConfig::tpn_default();
  SolverConfig solver;
  ImuNoise imu_noise;  // gyro/accel sigmas filled from the rig when zero
  double ekf_process_noise = 1e-8;  // s^2 per propagation
  double ekf_meas_var = 1e-8;       // s^2
};

struct WindowReport {
  int window_index = 0;
  int frame_first = 0;
  int frame_last = 0;
  double td_est = 0.0;
  double td_true_mean = 0.0;
  int iterations = 0;
  double cost_initial = 0.0;
  double cost_final = 0.0;
  int n_wellmatched = 0;
  int n_its = 0;
  int n_f2f = 0;
  int n_fallback = 0;
  double its_loss = -1.0;
  double f2f_loss = -1.0;
  double tpn_loss = -1.0;
  bool diverged = false;
  bool td_frozen = false;
  double td_pred = 0.0;  // prior center used in this window
  Vec3 v_end = Vec3::Zero();
};

struct FrameEstimate {
  int frame = 0;
  double stamp = 0.0;
  Mat3 r_wb = Mat3::Identity();
  Vec3 p_wb = Vec3::Zero();
  Vec3 v_w = Vec3::Zero();
};

struct PipelineResult {
  std::vector<WindowReport> windows;
  std::vector<FrameEstimate> trajectory;  // latest estimate per processed frame
  std::vector<double> tpn_buffer;         // label buffer state after the last window
};

// Algorithm: slide a window of `window` frames by `stride`; per window run
// stage 1 (velocity labels), stage 2 (FVON routing + training), stage 3 (TPN
// label buffer), stage 4 (TPN training + prior factor), then solve.
PipelineResult run_pipeline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                            const PipelineConfig& config);

PipelineResult run_ton_pipeline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                                PipelineConfig config);
PipelineResult run_sir_baseline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                                PipelineConfig config);

}  // namespace toncal::est
