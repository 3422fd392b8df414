#include "toncal/sim.hpp"

#include <cmath>
#include <stdexcept>

#include "toncal/parallel.hpp"

namespace toncal::sim {

void SensorRig::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("rig: fx and fy must be > 0");
  if (cam_rate <= 0.0 || imu_rate <= 0.0)
    throw std::invalid_argument("rig: sensor rates must be > 0");
  if (cam_rate >= imu_rate)
    throw std::invalid_argument("rig: camera rate must be below IMU rate");
  if (width <= 0.0 || height <= 0.0) throw std::invalid_argument("rig: image bounds must be > 0");
}

Mat3 forward_camera_from_body() {
  Mat3 r;
  r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  return r;
}

SensorRig default_rig() {
  SensorRig rig;
  rig.r_cb = forward_camera_from_body();
  rig.p_cb = Vec3(0.05, 0.0, 0.02);
  return rig;
}

double evolve_offset(double td_prev, const OffsetModel& model, Rng& rng) {
  double td = td_prev + model.bias_per_frame;
  if (model.noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, model.noise_sigma);
    td += n(rng);
  }
  return td;
}

std::optional<Vec2> project_camera_point(const Vec3& xc, const SensorRig& rig) {
  if (xc.z() <= rig.near_plane) return std::nullopt;
  const double u = rig.fx * xc.x() / xc.z() + rig.cx;
  const double v = rig.fy * xc.y() / xc.z() + rig.cy;
  if (u < 0.0 || u > rig.width || v < 0.0 || v > rig.height) return std::nullopt;
  return Vec2(u, v);
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& xc, const SensorRig& rig) {
  const double iz = 1.0 / xc.z();
  Eigen::Matrix<double, 2, 3> j;
  j << rig.fx * iz, 0, -rig.fx * xc.x() * iz * iz, 0, rig.fy * iz, -rig.fy * xc.y() * iz * iz;
  return j;
}

Vec3 camera_point(const Mat3& r_wb, const Vec3& p_wb, const Vec3& landmark,
                  const SensorRig& rig) {
  return rig.r_cb * (r_wb.transpose() * (landmark - p_wb)) + rig.p_cb;
}

std::optional<Vec2> project(const Mat3& r_wb, const Vec3& p_wb, const Vec3& landmark,
                            const SensorRig& rig) {
  return project_camera_point(camera_point(r_wb, p_wb, landmark, rig), rig);
}

ImuSample sample_imu(const Trajectory& traj, const SensorRig& rig, double t, Rng& rng) {
  if (t < 0.0 || t > traj.duration()) throw std::out_of_range("sample_imu: t outside trajectory");
  ImuSample s;
  s.t = t;
  s.omega = traj.angular_velocity_body(t);
  s.accel = traj.rotation(t).transpose() * (traj.acceleration(t) - rig.gravity);
  if (rig.gyro_noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, rig.gyro_noise_sigma);
    s.omega += Vec3(n(rng), n(rng), n(rng));
  }
  if (rig.accel_noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, rig.accel_noise_sigma);
    s.accel += Vec3(n(rng), n(rng), n(rng));
  }
  return s;
}

Vec2 true_feature_velocity(const Trajectory& traj, const SensorRig& rig, const Vec3& landmark,
                           double t) {
  const Mat3 r_wb = traj.rotation(t);
  const Vec3 p_wb = traj.position(t);
  const Vec3 xb = r_wb.transpose() * (landmark - p_wb);
  const Vec3 xc = rig.r_cb * xb + rig.p_cb;
  if (!project_camera_point(xc, rig)) {
    throw std::runtime_error("true_feature_velocity: landmark out of view");
  }
  const Vec3 omega = traj.angular_velocity_body(t);
  const Vec3 xb_dot = -omega.cross(xb) - r_wb.transpose() * traj.velocity(t);
  const Vec3 xc_dot = rig.r_cb * xb_dot;
  const double z = xc.z();
  return Vec2(rig.fx * (xc_dot.x() * z - xc.x() * xc_dot.z()) / (z * z),
              rig.fy * (xc_dot.y() * z - xc.y() * xc_dot.z()) / (z * z));
}

SimDataset generate_dataset(const SimConfig& config) {
  config.rig.validate();
  if (config.landmark_count < 50)
    throw std::invalid_argument("generate_dataset: landmark count must be >= 50");

  SimDataset ds;
  ds.config = config;
  ds.trajectory = make_trajectory(config.profile, config.profile_params);
  const Trajectory& traj = ds.trajectory;
  Rng rng(config.seed);

  // Landmark box: trajectory bounds plus margin, sampled on a fixed grid.
  Vec3 lo = traj.position(0.0), hi = lo;
  const int nb = 256;
  for (int i = 0; i <= nb; ++i) {
    const Vec3 p = traj.position(traj.duration() * i / nb);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  lo -= Vec3::Constant(config.landmark_margin);
  hi += Vec3::Constant(config.landmark_margin);
  std::uniform_real_distribution<double> ux(lo.x(), hi.x());
  std::uniform_real_distribution<double> uy(lo.y(), hi.y());
  std::uniform_real_distribution<double> uz(lo.z(), hi.z());
  ds.landmarks.reserve(config.landmark_count);
  for (int i = 0; i < config.landmark_count; ++i) {
    const double x = ux(rng), y = uy(rng), z = uz(rng);
    ds.landmarks.emplace_back(x, y, z);
  }

  // Camera frames: stamped on the IMU clock, sampled at stamp + t_d(k).
  const double frame_dt = 1.0 / config.rig.cam_rate;
  const int n_frames = static_cast<int>(std::floor(traj.duration() * config.rig.cam_rate)) + 1;
  double td = config.offset.initial;
  ds.frames.reserve(n_frames);
  for (int k = 0; k < n_frames; ++k) {
    if (k > 0) {
      const double td_next = evolve_offset(td, config.offset, rng);
      if (std::abs(td_next - td) > 0.5 * frame_dt) {
        throw std::runtime_error(
            "frame-reordering: offset jitter exceeds half the frame interval");
      }
      td = td_next;
    }
    Frame f;
    f.index = k;
    f.stamp = k * frame_dt;
    f.td_true = td;
    f.true_time = f.stamp + td;
    f.r_wb = traj.rotation(f.true_time);
    f.p_wb = traj.position(f.true_time);
    f.v_w = traj.velocity(f.true_time);
    f.omega_body = traj.angular_velocity_body(f.true_time);
    ds.frames.push_back(f);
  }

  const double imu_dt = 1.0 / config.rig.imu_rate;
  const int n_imu = static_cast<int>(std::floor(traj.duration() * config.rig.imu_rate)) + 1;
  ds.imu.reserve(n_imu);
  for (int j = 0; j < n_imu; ++j) {
    ds.imu.push_back(sample_imu(traj, config.rig, j * imu_dt, rng));
  }
  return ds;
}

void project_landmarks(const Mat3& r_wb, const Vec3& p_wb, const std::vector<Vec3>& landmarks,
                       const SensorRig& rig, std::vector<std::optional<Vec2>>& out,
                       bool parallel) {
  out.resize(landmarks.size());
  auto kernel = [&](std::size_t i) { out[i] = project(r_wb, p_wb, landmarks[i], rig); };
  if (parallel) {
    parallel_for(static_cast<std::ptrdiff_t>(landmarks.size()), kernel);
  } else {
    serial_for(static_cast<std::ptrdiff_t>(landmarks.size()), kernel);
  }
}

}  // namespace toncal::sim
