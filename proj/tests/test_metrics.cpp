#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "toncal/metrics.hpp"
#include "toncal/so3.hpp"

using namespace toncal;
using namespace toncal::metrics;

namespace {

OffsetSeries make_series(const std::vector<double>& est_ms, double gt_ms = 0.0) {
  OffsetSeries s;
  for (std::size_t i = 0; i < est_ms.size(); ++i) {
    s.index.push_back(static_cast<int>(i));
    s.td_est.push_back(est_ms[i] * 1e-3);
    s.td_gt.push_back(gt_ms * 1e-3);
  }
  return s;
}

TrajectoryEstimate identity_traj(int n) {
  TrajectoryEstimate t;
  for (int i = 0; i < n; ++i) {
    t.index.push_back(i);
    t.r_est.push_back(Mat3::Identity());
    t.p_est.push_back(Vec3(i * 0.1, 0, 0));
    t.v_est.push_back(Vec3(2, 0, 0));
    t.r_gt.push_back(Mat3::Identity());
    t.p_gt.push_back(Vec3(i * 0.1, 0, 0));
  }
  return t;
}

}  // namespace

TEST_CASE("cit on the worked series") {
  const auto s = make_series({5.0, 3.0, 2.05, 2.02, 2.0});
  CitConfig cfg;
  cfg.target = 2e-3;
  cfg.eps1 = 0.1e-3;
  cfg.eps2 = 0.1e-3;
  const auto k = cit(s, cfg);
  REQUIRE(k.has_value());
  CHECK(*k == 3);  // index 2 passes eps1 but fails the stability condition
}

TEST_CASE("cit trivial cases") {
  CitConfig cfg;
  cfg.target = 2e-3;
  cfg.eps1 = 0.1e-3;
  cfg.eps2 = 0.1e-3;
  const auto constant = make_series({2.0, 2.0, 2.0});
  CHECK(*cit(constant, cfg) == 1);

  const auto never = make_series({5.0, 5.0, 5.0});
  CHECK_FALSE(cit(never, cfg).has_value());

  CHECK_THROWS_AS(cit(make_series({2.0}), cfg), std::invalid_argument);
  CitConfig bad = cfg;
  bad.eps1 = 0.0;
  CHECK_THROWS_AS(cit(constant, bad), std::invalid_argument);
}

TEST_CASE("cit is monotone in eps1") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 6.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> est;
    for (int i = 0; i < 30; ++i) est.push_back(u(rng));
    const auto s = make_series(est);
    CitConfig a;
    a.target = 2e-3;
    a.eps1 = 0.5e-3;
    a.eps2 = 2.0e-3;
    CitConfig b = a;
    b.eps1 = 2.0e-3;
    const auto ka = cit(s, a);
    const auto kb = cit(s, b);
    if (ka.has_value()) {
      REQUIRE(kb.has_value());
      CHECK(*kb <= *ka);
    }
  }
}

TEST_CASE("cit with a per-index target tracks drifting ground truth") {
  OffsetSeries s;
  for (int i = 0; i < 10; ++i) {
    s.index.push_back(i);
    s.td_gt.push_back(1e-3 * i);
    s.td_est.push_back(1e-3 * i + (i < 5 ? 5e-3 : 0.1e-3));
  }
  CitConfig cfg;
  cfg.per_index_target = true;
  cfg.eps1 = 0.5e-3;
  cfg.eps2 = 2e-3;
  // k=5 meets eps1 but the 9.0 -> 5.1 ms jump fails the stability level.
  CHECK(*cit(s, cfg) == 6);
}

TEST_CASE("tpe values and rmse") {
  SUBCASE("perfect estimate gives zero") {
    auto s = make_series({3.0, 3.0, 3.0}, 3.0);
    const auto t = identity_traj(3);
    const auto r = tpe(s, t);
    CHECK(r.rmse == 0.0);
  }
  SUBCASE("5 ms error at 2 m/s is 10 mm") {
    auto s = make_series({5.0}, 0.0);
    s.index.push_back(1);
    s.td_est.push_back(5e-3);
    s.td_gt.push_back(0.0);
    const auto t = identity_traj(2);
    const auto r = tpe(s, t);
    CHECK(r.per_index[0].x() == doctest::Approx(0.010).epsilon(1e-12));
    CHECK(r.per_index[0].norm() == doctest::Approx(0.010).epsilon(1e-12));
  }
  SUBCASE("index mismatch throws") {
    auto s = make_series({1.0, 2.0}, 0.0);
    auto t = identity_traj(2);
    t.index[1] = 7;
    CHECK_THROWS_AS(tpe(s, t), std::invalid_argument);
  }
}

TEST_CASE("tpe scales exactly linearly in the offset error") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  OffsetSeries s1, s2;
  TrajectoryEstimate t = identity_traj(20);
  for (int i = 0; i < 20; ++i) {
    const double err = u(rng) * 1e-3;
    s1.index.push_back(i);
    s1.td_gt.push_back(0.0);
    s1.td_est.push_back(err);
    s2.index.push_back(i);
    s2.td_gt.push_back(0.0);
    s2.td_est.push_back(2.0 * err);
    t.v_est[i] = Vec3(u(rng), u(rng), u(rng));
  }
  const auto r1 = tpe(s1, t);
  const auto r2 = tpe(s2, t);
  for (int i = 0; i < 20; ++i) {
    CHECK(r2.per_index[i].x() == 2.0 * r1.per_index[i].x());
    CHECK(r2.per_index[i].y() == 2.0 * r1.per_index[i].y());
    CHECK(r2.per_index[i].z() == 2.0 * r1.per_index[i].z());
  }
  CHECK(r2.rmse == 2.0 * r1.rmse);
}

TEST_CASE("ate basics") {
  SUBCASE("identical trajectories give zero error") {
    const auto t = identity_traj(10);
    const auto r = ate(t, Align::kNone);
    CHECK(r.ape_rmse == 0.0);
    CHECK(r.are_rmse == 0.0);
  }
  SUBCASE("constant offset with align none is exact") {
    auto t = identity_traj(10);
    for (auto& p : t.p_est) p += Vec3(0.1, 0, 0);
    const auto r = ate(t, Align::kNone);
    CHECK(r.ape_rmse == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("rigid alignment removes a rigid transform") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TrajectoryEstimate t;
    const Mat3 rot = so3::exp(Vec3(0.4, -0.2, 0.9));
    const Vec3 shift(4.0, -2.0, 1.0);
    for (int i = 0; i < 15; ++i) {
      const Vec3 p(u(rng) * 3, u(rng) * 3, u(rng));
      const Mat3 r = so3::exp(Vec3(u(rng), u(rng), u(rng)));
      t.index.push_back(i);
      t.p_gt.push_back(p);
      t.r_gt.push_back(r);
      t.p_est.push_back(rot * p + shift);
      t.r_est.push_back(rot * r);
      t.v_est.push_back(Vec3::Zero());
    }
    const auto r = ate(t, Align::kRigid);
    CHECK_FALSE(r.align_fallback);
    CHECK(r.ape_rmse < 1e-9);
    CHECK(r.are_rmse < 1e-7);
  }
  SUBCASE("collinear estimates fall back to no alignment") {
    TrajectoryEstimate t;
    for (int i = 0; i < 10; ++i) {
      t.index.push_back(i);
      t.p_est.push_back(Vec3(i * 0.5, 0, 0));
      t.p_gt.push_back(Vec3(i * 0.5, 1, 0));
      t.r_est.push_back(Mat3::Identity());
      t.r_gt.push_back(Mat3::Identity());
      t.v_est.push_back(Vec3::Zero());
    }
    const auto r = ate(t, Align::kRigid);
    CHECK(r.align_fallback);
    CHECK(r.ape_rmse == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("rigid alignment needs at least 3 frames") {
    auto t = identity_traj(2);
    CHECK_THROWS_AS(ate(t, Align::kRigid), std::invalid_argument);
  }
}

TEST_CASE("ate with rigid alignment is invariant under rigid transforms of the estimate") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  TrajectoryEstimate t;
  for (int i = 0; i < 25; ++i) {
    const Vec3 p(u(rng) * 4, u(rng) * 4, u(rng) * 0.5);
    t.index.push_back(i);
    t.p_gt.push_back(p);
    t.r_gt.push_back(so3::exp(Vec3(u(rng), u(rng), u(rng))));
    t.p_est.push_back(p + 0.02 * Vec3(u(rng), u(rng), u(rng)));
    t.r_est.push_back(t.r_gt.back() * so3::exp(0.01 * Vec3(u(rng), u(rng), u(rng))));
    t.v_est.push_back(Vec3::Zero());
  }
  const auto base = ate(t, Align::kRigid);
  const Mat3 rot = so3::exp(Vec3(-0.3, 0.7, 1.2));
  const Vec3 shift(10, -20, 5);
  TrajectoryEstimate moved = t;
  for (int i = 0; i < 25; ++i) {
    moved.p_est[i] = rot * t.p_est[i] + shift;
    moved.r_est[i] = rot * t.r_est[i];
  }
  const auto r = ate(moved, Align::kRigid);
  CHECK(std::abs(r.ape_rmse - base.ape_rmse) < 1e-9);
  CHECK(std::abs(r.are_rmse - base.are_rmse) < 1e-7);
}
