#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "toncal/trajectory.hpp"

namespace toncal::sim {

using Rng = std::mt19937_64;

struct SensorRig {
  double fx = 400.0, fy = 400.0;
  double cx = 320.0, cy = 240.0;
  double width = 640.0, height = 480.0;
  Mat3 r_cb = Mat3::Identity();  // camera-from-body rotation
  Vec3 p_cb = Vec3::Zero();      // camera-from-body translation
  double cam_rate = 20.0;        // Hz
  double imu_rate = 200.0;       // Hz
  double pixel_noise_sigma = 0.0;   // px
  double gyro_noise_sigma = 0.0;    // rad/s per sample
  double accel_noise_sigma = 0.0;   // m/s^2 per sample
  Vec3 gravity = Vec3(0, 0, -9.81);
  double near_plane = 0.1;  // m

  void validate() const;  // throws std::invalid_argument
};

// Forward-looking camera: camera z = body x, camera x = -body y, camera y = -body z.
Mat3 forward_camera_from_body();

SensorRig default_rig();

// t_d(k) = t_d(k-1) + bias_per_frame + N(0, sigma^2)
struct OffsetModel {
  double initial = 0.0;         // s
  double bias_per_frame = 0.0;  // s/frame
  double noise_sigma = 0.0;     // s
};

double evolve_offset(double td_prev, const OffsetModel& model, Rng& rng);

struct ImuSample {
  double t = 0.0;  // IMU clock, s
  Vec3 omega = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct Frame {
  int index = 0;
  double stamp = 0.0;     // reported timestamp, IMU clock
  double true_time = 0.0; // actual sample instant = stamp + td_true
  double td_true = 0.0;
  Mat3 r_wb = Mat3::Identity();
  Vec3 p_wb = Vec3::Zero();
  Vec3 v_w = Vec3::Zero();
  Vec3 omega_body = Vec3::Zero();
};

struct SimConfig {
  Profile profile = Profile::kAggressive;
  ProfileParams profile_params;
  SensorRig rig;
  OffsetModel offset;
  int landmark_count = 600;
  double landmark_margin = 8.0;  // box padding around trajectory bounds, m
  std::uint64_t seed = 1;
};

struct SimDataset {
  SimConfig config;
  Trajectory trajectory;
  std::vector<Vec3> landmarks;
  std::vector<ImuSample> imu;
  std::vector<Frame> frames;
};

// Pinhole projection of a camera-frame point; nullopt when behind the near
// plane or outside image bounds.
std::optional<Vec2> project_camera_point(const Vec3& xc, const SensorRig& rig);

// 2x3 Jacobian of the pinhole projection wrt the camera-frame point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& xc, const SensorRig& rig);

// Projection of a world landmark from body pose (r_wb, p_wb) through the rig
// extrinsics.
std::optional<Vec2> project(const Mat3& r_wb, const Vec3& p_wb, const Vec3& landmark,
                            const SensorRig& rig);

Vec3 camera_point(const Mat3& r_wb, const Vec3& p_wb, const Vec3& landmark,
                  const SensorRig& rig);

// Noisy body-frame gyro/accel at time t. Throws std::out_of_range outside
// [0, duration].
ImuSample sample_imu(const Trajectory& traj, const SensorRig& rig, double t, Rng& rng);

// Exact image-plane velocity of a landmark at time t via the chain rule on
// the analytic trajectory. Throws std::runtime_error when out of view.
Vec2 true_feature_velocity(const Trajectory& traj, const SensorRig& rig, const Vec3& landmark,
                           double t);

// Perfectly synchronized ground truth with the offset injected per frame:
// frame k is sampled at k/cam_rate + t_d(k) and stamped k/cam_rate.
// Throws std::runtime_error("frame-reordering...") when offset jitter exceeds
// half the frame interval, std::invalid_argument on bad config.
SimDataset generate_dataset(const SimConfig& config);

// Landmark projections for one body pose, written slot-per-landmark.
// Parallel and serial variants produce bit-identical output.
void project_landmarks(const Mat3& r_wb, const Vec3& p_wb, const std::vector<Vec3>& landmarks,
                       const SensorRig& rig, std::vector<std::optional<Vec2>>& out,
                       bool parallel = true);

}  // namespace toncal::sim
