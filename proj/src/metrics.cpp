#include "toncal/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Geometry>

namespace toncal::metrics {

void OffsetSeries::validate() const {
  if (index.size() != td_est.size() || index.size() != td_gt.size())
    throw std::invalid_argument("offset series: column lengths differ");
  for (std::size_t i = 1; i < index.size(); ++i) {
    if (index[i] <= index[i - 1])
      throw std::invalid_argument("offset series: indices must be strictly increasing");
  }
}

std::optional<int> cit(const OffsetSeries& series, const CitConfig& config) {
  series.validate();
  if (series.index.size() < 2) throw std::invalid_argument("cit: series length must be >= 2");
  if (config.eps1 <= 0.0 || config.eps2 <= 0.0)
    throw std::invalid_argument("cit: eps1 and eps2 must be > 0");
  for (std::size_t k = 1; k < series.td_est.size(); ++k) {
    const double target = config.per_index_target ? series.td_gt[k] : config.target;
    if (std::abs(series.td_est[k] - target) <= config.eps1 &&
        std::abs(series.td_est[k] - series.td_est[k - 1]) <= config.eps2) {
      return static_cast<int>(k);
    }
  }
  return std::nullopt;
}

void TrajectoryEstimate::validate() const {
  const std::size_t n = index.size();
  if (r_est.size() != n || p_est.size() != n || v_est.size() != n || r_gt.size() != n ||
      p_gt.size() != n)
    throw std::invalid_argument("trajectory estimate: column lengths differ");
}

TpeResult tpe(const OffsetSeries& series, const TrajectoryEstimate& traj) {
  series.validate();
  traj.validate();
  if (series.index != traj.index)
    throw std::invalid_argument("tpe: offset series and trajectory index sets differ");
  TpeResult out;
  out.per_index.resize(series.index.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < series.index.size(); ++k) {
    out.per_index[k] = (series.td_est[k] - series.td_gt[k]) * traj.v_est[k];
    acc += out.per_index[k].squaredNorm();
  }
  out.rmse = std::sqrt(acc / static_cast<double>(series.index.size()));
  return out;
}

AteResult ate(const TrajectoryEstimate& traj, Align align) {
  traj.validate();
  const std::size_t n = traj.index.size();
  if (n == 0) throw std::invalid_argument("ate: empty trajectory");

  Mat3 r_align = Mat3::Identity();
  Vec3 t_align = Vec3::Zero();
  AteResult out;
  if (align == Align::kRigid) {
    if (n < 3) throw std::invalid_argument("ate: rigid alignment needs >= 3 frames");
    Eigen::Matrix3Xd src(3, n), dst(3, n);
    for (std::size_t i = 0; i < n; ++i) {
      src.col(i) = traj.p_est[i];
      dst.col(i) = traj.p_gt[i];
    }
    // Collinear estimates leave a rotation about the line undetermined.
    const Vec3 mean = src.rowwise().mean();
    Eigen::Matrix3Xd centered = src.colwise() - mean;
    Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
    const auto& sv = svd.singularValues();
    if (sv[1] <= 1e-9 * std::max(sv[0], 1e-12)) {
      out.align_fallback = true;
    } else {
      const Eigen::Matrix4d t = Eigen::umeyama(src, dst, false);
      r_align = t.topLeftCorner<3, 3>();
      t_align = t.topRightCorner<3, 1>();
    }
  }

  out.ape.resize(n);
  out.are.resize(n);
  double acc_p = 0.0, acc_r = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 p = r_align * traj.p_est[i] + t_align;
    const Mat3 r = r_align * traj.r_est[i];
    out.ape[i] = (p - traj.p_gt[i]).norm();
    out.are[i] = so3::log(traj.r_gt[i].transpose() * r).norm() * 180.0 / M_PI;
    acc_p += out.ape[i] * out.ape[i];
    acc_r += out.are[i] * out.are[i];
  }
  out.ape_rmse = std::sqrt(acc_p / static_cast<double>(n));
  out.are_rmse = std::sqrt(acc_r / static_cast<double>(n));
  return out;
}

}  // namespace toncal::metrics
