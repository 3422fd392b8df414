#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "toncal/dataset_io.hpp"
#include "toncal/sim.hpp"
#include "toncal/so3.hpp"

using namespace toncal;
using namespace toncal::sim;

namespace {

// Independent midpoint strapdown integrator, used as the oracle for IMU
// consistency checks.
struct IntegratedPose {
  Mat3 r = Mat3::Identity();
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
};

IntegratedPose integrate_imu(const Trajectory& traj, const SensorRig& rig, double t_end,
                             double dt) {
  Rng rng(0);
  IntegratedPose s;
  s.r = traj.rotation(0.0);
  s.p = traj.position(0.0);
  s.v = traj.velocity(0.0);
  const int n = static_cast<int>(std::round(t_end / dt));
  for (int i = 0; i < n; ++i) {
    const auto m0 = sample_imu(traj, rig, i * dt, rng);
    const auto m1 = sample_imu(traj, rig, (i + 1) * dt, rng);
    const Vec3 w_mid = 0.5 * (m0.omega + m1.omega);
    const Mat3 r_next = s.r * so3::exp(w_mid * dt);
    const Vec3 a_mid = 0.5 * (s.r * m0.accel + r_next * m1.accel) + rig.gravity;
    s.p += s.v * dt + 0.5 * a_mid * dt * dt;
    s.v += a_mid * dt;
    s.r = r_next;
  }
  return s;
}

}  // namespace

TEST_CASE("circle with zero rate is static") {
  const auto traj = make_trajectory(Profile::kCircle, {1.0, 0.0, 10.0});
  for (double t : {0.0, 1.7, 9.9}) {
    CHECK((traj.position(t) - traj.position(0.0)).norm() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(traj.velocity(t).norm() == doctest::Approx(0.0).epsilon(1e-15));
  }
}

TEST_CASE("circle speed equals radius times rate") {
  const auto traj = make_trajectory(Profile::kCircle, {2.0, 1.0, 10.0});
  for (double t = 0.0; t < 10.0; t += 0.37) {
    CHECK(traj.velocity(t).norm() == doctest::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("figure8 analytic velocity matches central differences") {
  const auto traj = make_trajectory(Profile::kFigure8, {2.0, 0.5, 20.0});
  const double h = 1e-4;
  for (double t = 0.1; t < 19.9; t += 0.93) {
    const Vec3 fd = (traj.position(t + h) - traj.position(t - h)) / (2.0 * h);
    CHECK((traj.velocity(t) - fd).norm() < 1e-6);
  }
}

TEST_CASE("rotations stay orthonormal with unit determinant") {
  for (auto profile : {Profile::kCircle, Profile::kFigure8, Profile::kAggressive}) {
    const auto traj = make_trajectory(profile, {1.5, 1.1, 12.0});
    for (double t = 0.0; t <= 12.0; t += 0.61) {
      const Mat3 r = traj.rotation(t);
      CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-9);
      CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("body angular velocity is consistent with the rotation flow") {
  const auto traj = make_trajectory(Profile::kAggressive, {1.0, 1.2, 10.0});
  const double h = 1e-6;
  for (double t = 0.2; t < 9.8; t += 0.77) {
    const Mat3 r0 = traj.rotation(t - h);
    const Mat3 r1 = traj.rotation(t + h);
    const Vec3 w_fd = so3::log(r0.transpose() * r1) / (2.0 * h);
    CHECK((traj.angular_velocity_body(t) - w_fd).norm() < 1e-5);
  }
}

TEST_CASE("aggressive profile reaches high dynamics") {
  const auto traj = make_trajectory(Profile::kAggressive, {1.0, 1.2, 20.0});
  double max_w = 0.0, max_v = 0.0;
  for (double t = 0.0; t <= 20.0; t += 0.01) {
    max_w = std::max(max_w, traj.angular_velocity_body(t).norm());
    max_v = std::max(max_v, traj.velocity(t).norm());
  }
  CHECK(max_w > 1.5);
  CHECK(max_v > 3.0);
}

TEST_CASE("invalid profile parameters are rejected") {
  CHECK_THROWS_AS(make_trajectory(Profile::kCircle, {-1.0, 1.0, 10.0}), std::invalid_argument);
  CHECK_THROWS_AS(make_trajectory(Profile::kCircle, {1.0, 1.0, 0.0}), std::invalid_argument);
  CHECK_THROWS(profile_from_name("spiral"));
}

TEST_CASE("imu sampling: static pose reports the gravity reaction") {
  const auto traj = make_trajectory(Profile::kCircle, {1.0, 0.0, 10.0});
  SensorRig rig = default_rig();
  Rng rng(1);
  const auto s = sample_imu(traj, rig, 2.0, rng);
  CHECK((s.accel - Vec3(0, 0, 9.81)).norm() < 1e-12);
  CHECK(s.omega.norm() < 1e-12);
  CHECK_THROWS_AS(sample_imu(traj, rig, -0.5, rng), std::out_of_range);
}

TEST_CASE("imu sampling: circular motion gives the centripetal magnitude") {
  const auto traj = make_trajectory(Profile::kCircle, {2.0, 1.0, 10.0});
  SensorRig rig = default_rig();
  Rng rng(1);
  for (double t : {0.3, 1.1, 4.2}) {
    const auto s = sample_imu(traj, rig, t, rng);
    const Vec3 pdd = traj.rotation(t) * s.accel + rig.gravity;
    CHECK(pdd.norm() == doctest::Approx(2.0).epsilon(1e-10));
  }
}

TEST_CASE("integrating noiseless imu reproduces the trajectory") {
  const auto traj = make_trajectory(Profile::kAggressive, {1.0, 1.2, 2.0});
  SensorRig rig = default_rig();
  const auto s = integrate_imu(traj, rig, 1.0, 1.0 / rig.imu_rate);
  CHECK((s.p - traj.position(1.0)).norm() < 1e-3);
  CHECK(so3::log(s.r.transpose() * traj.rotation(1.0)).norm() < 1e-3);
}

TEST_CASE("pinhole projection basics") {
  SensorRig rig;
  rig.fx = rig.fy = 1.0;
  rig.cx = rig.cy = 0.0;
  rig.width = rig.height = 2.0;
  // Image coordinates can be negative here; widen bounds around zero by
  // shifting the principal point instead.
  rig.cx = 1.0;
  rig.cy = 1.0;
  const auto z = project_camera_point(Vec3(0, 0, 1), rig);
  REQUIRE(z.has_value());
  CHECK(z->x() == doctest::Approx(1.0));
  CHECK(z->y() == doctest::Approx(1.0));

  SensorRig rig2 = default_rig();
  const auto z2 = project_camera_point(Vec3(0.5, 0, 1), rig2);
  REQUIRE(z2.has_value());
  CHECK(z2->x() == doctest::Approx(400.0 * 0.5 + 320.0));

  CHECK_FALSE(project_camera_point(Vec3(0, 0, -1.0), rig2).has_value());
}

TEST_CASE("true feature velocity: static camera sees zero flow") {
  const auto traj = make_trajectory(Profile::kCircle, {1.0, 0.0, 10.0});
  SensorRig rig = default_rig();
  // Landmark ahead of the camera (body x axis at identity yaw offset pi/2).
  const Vec3 lm = traj.position(0.0) + traj.rotation(0.0) * Vec3(5.0, 0.2, 0.1);
  const Vec2 v = true_feature_velocity(traj, rig, lm, 1.0);
  CHECK(v.norm() < 1e-12);
}

TEST_CASE("true feature velocity: pure translation matches the pinhole derivative") {
  // Hand-built trajectory: constant velocity vx along body x, identity yaw.
  Channel px, py, pz, yaw, pitch, roll;
  const double vx = 1.5;
  px.slope = vx;
  Trajectory traj(Profile::kCircle, px, py, pz, yaw, pitch, roll, 10.0);
  SensorRig rig = default_rig();
  rig.p_cb = Vec3::Zero();
  const double depth = 4.0;
  // Landmark on the optical axis: body x forward = camera z.
  const Vec3 lm = traj.position(2.0) + Vec3(depth, 0, 0);
  const Vec2 v = true_feature_velocity(traj, rig, lm, 2.0);
  // Camera moves toward the point; x-translation of the camera is along its
  // own z axis here, so flow comes only from looming (zero at the center).
  CHECK(v.norm() < 1e-9);

  // Lateral translation: camera x = -body y, so velocity along body y shows
  // up as -fx * vy / Z horizontally.
  Channel py2;
  py2.slope = 0.7;
  Trajectory traj2(Profile::kCircle, Channel{}, py2, Channel{}, Channel{}, Channel{}, Channel{},
                   10.0);
  const Vec3 lm2 = traj2.position(2.0) + Vec3(depth, 0.7 * 2.0 + 0.0, 0);
  // Keep the landmark fixed in world; evaluate where it sits at t=2.
  const Vec3 lm_fixed = Vec3(depth, 1.4, 0);
  const Vec2 v2 = true_feature_velocity(traj2, rig, lm_fixed, 2.0);
  CHECK(v2.x() == doctest::Approx(rig.fx * 0.7 / depth).epsilon(1e-9));
  CHECK(std::abs(v2.y()) < 1e-9);
  (void)lm2;
}

TEST_CASE("true feature velocity matches finite differences of the projection") {
  const auto traj = make_trajectory(Profile::kAggressive, {1.0, 1.2, 10.0});
  SensorRig rig = default_rig();
  const double t = 2.0;
  const Vec3 lm = traj.position(t) + traj.rotation(t) * Vec3(6.0, 0.5, -0.3);
  const Vec2 v = true_feature_velocity(traj, rig, lm, t);
  const double h = 1e-5;
  const auto za = project(traj.rotation(t + h), traj.position(t + h), lm, rig);
  const auto zb = project(traj.rotation(t - h), traj.position(t - h), lm, rig);
  REQUIRE(za.has_value());
  REQUIRE(zb.has_value());
  const Vec2 fd = (*za - *zb) / (2.0 * h);
  CHECK((v - fd).norm() < 1e-3);
}

TEST_CASE("offset evolution") {
  Rng rng(1);
  OffsetModel constant{0.010, 0.0, 0.0};
  CHECK(evolve_offset(0.010, constant, rng) == doctest::Approx(0.010).epsilon(1e-15));

  // 0.1 ms per second of data at 20 Hz = 0.005 ms per frame.
  OffsetModel drift{0.0, 0.1e-3 / 20.0, 0.0};
  double td = 0.0;
  for (int k = 0; k < 20; ++k) td = evolve_offset(td, drift, rng);
  CHECK(td == doctest::Approx(0.1e-3).epsilon(1e-12));

  OffsetModel noisy{0.0, 0.0, 0.05e-3};
  double prev = 0.0;
  double sum2 = 0.0;
  const int n = 10000;
  for (int k = 0; k < n; ++k) {
    const double next = evolve_offset(prev, noisy, rng);
    const double inc = next - prev;
    sum2 += inc * inc;
    prev = next;
  }
  const double var = sum2 / n;
  CHECK(var > 0.9 * noisy.noise_sigma * noisy.noise_sigma);
  CHECK(var < 1.1 * noisy.noise_sigma * noisy.noise_sigma);
}

TEST_CASE("dataset generation bookkeeping") {
  SimConfig cfg;
  cfg.profile = Profile::kFigure8;
  cfg.profile_params = {2.0, 0.5, 5.0};
  cfg.rig = default_rig();
  cfg.landmark_count = 80;
  cfg.seed = 11;

  SUBCASE("zero offset means perfectly synchronized") {
    cfg.offset = {0.0, 0.0, 0.0};
    const auto ds = generate_dataset(cfg);
    for (const auto& f : ds.frames) {
      CHECK(f.stamp == doctest::Approx(f.true_time).epsilon(1e-15));
    }
  }

  SUBCASE("constant +15 ms offset shifts every true sample time") {
    cfg.offset = {0.015, 0.0, 0.0};
    const auto ds = generate_dataset(cfg);
    for (const auto& f : ds.frames) {
      CHECK(f.true_time == doctest::Approx(f.stamp + 0.015).epsilon(1e-15));
      CHECK((f.p_wb - ds.trajectory.position(f.stamp + 0.015)).norm() < 1e-12);
      // Offset bookkeeping is exact, not approximate.
      CHECK(f.stamp + f.td_true == f.true_time);
    }
  }

  SUBCASE("seeded runs are byte-identical") {
    cfg.offset = {0.005, 1e-5, 2e-5};
    const auto a = generate_dataset(cfg);
    const auto b = generate_dataset(cfg);
    std::ostringstream sa, sb;
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
      sa << io::format_g17(a.frames[i].true_time) << io::format_g17(a.frames[i].td_true);
      sb << io::format_g17(b.frames[i].true_time) << io::format_g17(b.frames[i].td_true);
    }
    for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
      sa << io::format_g17(a.landmarks[i].x());
      sb << io::format_g17(b.landmarks[i].x());
    }
    CHECK(sa.str() == sb.str());
  }

  SUBCASE("offset jitter beyond half the frame interval is rejected") {
    cfg.offset = {0.0, 0.030, 0.0};  // 30 ms per frame at 20 Hz
    CHECK_THROWS_WITH_AS(generate_dataset(cfg),
                         doctest::Contains("frame-reordering"), std::runtime_error);
  }

  SUBCASE("landmark count below 50 is rejected") {
    cfg.landmark_count = 10;
    CHECK_THROWS_AS(generate_dataset(cfg), std::invalid_argument);
  }
}

TEST_CASE("projection round trip: pixel ray passes through the landmark") {
  SimConfig cfg;
  cfg.profile = Profile::kAggressive;
  cfg.profile_params = {1.0, 1.2, 3.0};
  cfg.rig = default_rig();
  cfg.landmark_count = 200;
  cfg.seed = 3;
  const auto ds = generate_dataset(cfg);
  int checked = 0;
  for (const auto& f : ds.frames) {
    for (const auto& lm : ds.landmarks) {
      const auto z = project(f.r_wb, f.p_wb, lm, cfg.rig);
      if (!z) continue;
      const Vec3 xc = camera_point(f.r_wb, f.p_wb, lm, cfg.rig);
      const Vec3 ray((z->x() - cfg.rig.cx) / cfg.rig.fx, (z->y() - cfg.rig.cy) / cfg.rig.fy, 1.0);
      CHECK((ray.normalized() - xc.normalized()).norm() < 1e-9);
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("parallel landmark projection matches the serial reference") {
  SimConfig cfg;
  cfg.rig = default_rig();
  cfg.landmark_count = 500;
  cfg.profile_params = {1.0, 1.2, 2.0};
  cfg.seed = 5;
  const auto ds = generate_dataset(cfg);
  std::vector<std::optional<Vec2>> a, b;
  const auto& f = ds.frames[7];
  project_landmarks(f.r_wb, f.p_wb, ds.landmarks, cfg.rig, a, true);
  project_landmarks(f.r_wb, f.p_wb, ds.landmarks, cfg.rig, b, false);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].has_value() == b[i].has_value());
    if (a[i]) {
      CHECK(a[i]->x() == b[i]->x());
      CHECK(a[i]->y() == b[i]->y());
    }
  }
}
