#pragma once

#include <optional>
#include <vector>

#include "toncal/so3.hpp"

namespace toncal::metrics {

struct OffsetSeries {
  std::vector<int> index;      // strictly increasing
  std::vector<double> td_est;  // s
  std::vector<double> td_gt;   // s

  void validate() const;  // throws std::invalid_argument
};

struct CitConfig {
  double target = 0.0;  // s
  double eps1 = 1e-3;   // error level, s
  double eps2 = 5e-4;   // stability level, s
  // Substitute the per-index ground truth for the target (drifting offsets).
  bool per_index_target = false;
};

// Smallest series position k (k >= 1) with |td_est(k) - target| <= eps1 and
// |td_est(k) - td_est(k-1)| <= eps2; nullopt when never reached.
std::optional<int> cit(const OffsetSeries& series, const CitConfig& config);

struct TrajectoryEstimate {
  std::vector<int> index;
  std::vector<Mat3> r_est;
  std::vector<Vec3> p_est;
  std::vector<Vec3> v_est;
  std::vector<Mat3> r_gt;
  std::vector<Vec3> p_gt;

  void validate() const;
};

struct TpeResult {
  std::vector<Vec3> per_index;  // (td_est - td_gt) * v_est, m
  double rmse = 0.0;            // over Euclidean norms, m
};

// Throws std::invalid_argument when the index sets differ.
TpeResult tpe(const OffsetSeries& series, const TrajectoryEstimate& traj);

enum class Align { kNone, kRigid };

struct AteResult {
  double ape_rmse = 0.0;  // m
  double are_rmse = 0.0;  // degrees
  std::vector<double> ape;
  std::vector<double> are;
  bool align_fallback = false;  // rigid alignment degenerate, used none
};

// Rigid alignment (closed form, no scale) of the estimate onto ground truth
// when requested; needs >= 3 indices for rigid.
AteResult ate(const TrajectoryEstimate& traj, Align align);

}  // namespace toncal::metrics
