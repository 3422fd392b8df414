#pragma once

#include <optional>
#include <span>
#include <vector>

#include "toncal/sim.hpp"

namespace toncal::est {

using sim::ImuSample;
using sim::SensorRig;

struct FrameState {
  Mat3 r_wb = Mat3::Identity();
  Vec3 p_wb = Vec3::Zero();
  Vec3 v_w = Vec3::Zero();
};

// Sliding-window state: per-frame pose/velocity, per-feature depth along the
// anchor observation ray, and the shared time offset. First frame is the
// gauge anchor. The feature's anchor pixel is shifted by its velocity at the
// solver's linearization offset, so depth cannot absorb the td signal.
struct WindowState {
  std::vector<int> frame_ids;
  std::vector<FrameState> frames;
  std::vector<int> feature_ids;
  std::vector<double> depths;            // z-depth in the anchor camera
  std::vector<int> anchor_slots;         // anchor frame slot per feature
  std::vector<Vec2> anchor_pixels;
  std::vector<Vec2> anchor_velocities;   // FVON / Eq.-2 velocity; zero for fallback
  double td = 0.0;

  // World point implied by the current depth and anchor state.
  Vec3 feature_world_point(int feature_slot, const SensorRig& rig, double anchor_td) const;
};

enum class VelocitySource { kConstantSpeed, kItsFvon, kF2fFvon, kZeroFallback };

const char* velocity_source_name(VelocitySource s);

struct VisualFactor {
  int feature_slot = 0;  // index into WindowState::depths
  int frame_slot = 0;    // observed frame; never the anchor itself
  Vec2 z = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  VelocitySource source = VelocitySource::kConstantSpeed;
};

// z(td) = z - V*td
Vec2 shift_observation(const Vec2& z, const Vec2& velocity, double td);

// Normalized-plane bearing of a pixel.
Vec3 backproject(const Vec2& pixel, const SensorRig& rig);

struct VisualEval {
  Vec2 residual = Vec2::Zero();
  Eigen::Matrix<double, 2, 3> j_theta;         // frame-j rotation (right perturbation)
  Eigen::Matrix<double, 2, 3> j_p;             // frame-j position
  Eigen::Matrix<double, 2, 3> j_anchor_theta;  // anchor-frame rotation
  Eigen::Matrix<double, 2, 3> j_anchor_p;      // anchor-frame position
  Eigen::Vector2d j_depth = Eigen::Vector2d::Zero();
  Vec2 j_td = Vec2::Zero();  // -V, zero for fallback factors
  bool active = true;        // false when behind the near plane
};

// anchor_td is the solver's linearization constant for the anchor shift; the
// residual treats it as fixed, so d residual / d td stays exactly -V.
VisualEval eval_visual_factor(const WindowState& state, const VisualFactor& factor,
                              const SensorRig& rig, double anchor_td);

// Slot-mapped evaluation of all visual factors; parallel and serial variants
// are bit-identical.
void eval_visual_factors(const WindowState& state, const std::vector<VisualFactor>& factors,
                         const SensorRig& rig, double anchor_td, std::vector<VisualEval>& out,
                         bool parallel = true);

// Midpoint preintegration between two stamps, biases fixed at zero.
struct ImuFactor {
  int frame_slot = 0;  // connects frame_slot and frame_slot + 1
  double dt = 0.0;
  Mat3 delta_r = Mat3::Identity();
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  Eigen::Matrix<double, 9, 9> covariance = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Matrix<double, 9, 9> sqrt_info = Eigen::Matrix<double, 9, 9>::Identity();
};

struct ImuNoise {
  double gyro_sigma = 0.0;   // rad/s per sample
  double accel_sigma = 0.0;  // m/s^2 per sample
  // Variance floor standing in for integration discretization error; keeps
  // the information matrix finite on noiseless data.
  double theta_floor = 1e-10;  // rad^2
  double vel_floor = 1e-8;     // (m/s)^2
  double pos_floor = 1e-8;     // m^2
};

// Throws std::invalid_argument when no sample falls in [t0, t1].
ImuFactor preintegrate_imu(std::span<const ImuSample> samples, double t0, double t1,
                           const ImuNoise& noise);

struct ImuEval {
  Eigen::Matrix<double, 9, 1> residual;  // [r_theta; r_v; r_p], unweighted
  Eigen::Matrix<double, 9, 9> j_i;       // wrt [dtheta_i, dp_i, dv_i]
  Eigen::Matrix<double, 9, 9> j_j;
};

ImuEval eval_imu_factor(const FrameState& fi, const FrameState& fj, const ImuFactor& factor,
                        const Vec3& gravity);

struct TdPriorFactor {
  double td_pred = 0.0;
  double variance = 1e-6;  // s^2, > 0
};

struct SolverConfig {
  int max_iterations = 25;
  double rel_cost_tol = 1e-9;
  double init_lambda = 1e-6;
  double lambda_up = 10.0;
  double lambda_down = 0.3;
  double max_lambda = 1e8;
  double td_clamp = 0.025;       // s; half the frame interval at 20 Hz
  double td_freeze_info = 1e-4;  // freeze td when its normal-equation diagonal is below
  double pixel_sigma = 1.0;      // px
  int min_visual_factors = 8;
  // Anchor-shift re-linearization: repeat the damped solve with the anchor
  // pixels shifted at the latest td until it stops moving (Aitken-accelerated).
  int max_outer_passes = 12;
  double outer_td_tol = 1e-7;  // s
  double min_depth = 0.05;     // m, clamp for depth states
  bool parallel = true;
};

struct SolveReport {
  std::vector<double> cost_trace;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool diverged = false;
  bool td_frozen = false;
  bool td_clamped = false;
  int deactivated = 0;  // factor deactivations seen across iterations
};

// Damped Gauss-Newton over the window. First pose fixed (gauge). Throws
// std::invalid_argument on fewer than 2 frames or fewer than
// min_visual_factors active visual factors.
SolveReport solve_window(WindowState& state, const std::vector<VisualFactor>& visual,
                         const std::vector<ImuFactor>& imu,
                         const std::optional<TdPriorFactor>& prior, const SensorRig& rig,
                         const SolverConfig& config);

// Scalar filter layer on td (Eq.-14-style prediction Jacobian).
struct TdPropagation {
  double mean = 0.0;
  double variance = 0.0;
  double jacobian = 0.0;  // (td_pred - td_prev) / dt
};

// Throws std::invalid_argument when dt <= 0.
TdPropagation ekf_propagate_td(double td_prev, double td_pred, double dt, double prior_var,
                               double process_noise);

struct TdPosterior {
  double mean = 0.0;
  double variance = 0.0;
};

TdPosterior ekf_update_td(const TdPropagation& prop, double measurement, double meas_var);

// Pose/velocity propagation by one preintegrated interval (used for window
// warm starts).
FrameState propagate_state(const FrameState& from, const ImuFactor& factor, const Vec3& gravity);

}  // namespace toncal::est
