#include "toncal/so3.hpp"

#include <Eigen/SVD>
#include <cmath>

namespace toncal::so3 {

Mat3 hat(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Vec3 vee(const Mat3& m) { return Vec3(m(2, 1), m(0, 2), m(1, 0)); }

Mat3 exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 wx = hat(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + wx + 0.5 * wx * wx;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + std::sin(theta) / theta * wx +
         (1.0 - std::cos(theta)) / theta2 * wx * wx;
}

Vec3 log(const Mat3& r) {
  const double cos_theta = std::min(1.0, std::max(-1.0, 0.5 * (r.trace() - 1.0)));
  const double theta = std::acos(cos_theta);
  const Vec3 axis_raw(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (theta < 1e-8) {
    return 0.5 * axis_raw;
  }
  if (theta > M_PI - 1e-6) {
    // Near pi the off-diagonal difference degenerates; recover the axis from
    // the symmetric part instead.
    Mat3 s = 0.5 * (r + Mat3::Identity());
    Vec3 axis(std::sqrt(std::max(0.0, s(0, 0))), std::sqrt(std::max(0.0, s(1, 1))),
              std::sqrt(std::max(0.0, s(2, 2))));
    int k;
    axis.cwiseAbs().maxCoeff(&k);
    for (int i = 0; i < 3; ++i) {
      if (i != k && s(k, i) < 0) axis[i] = -axis[i];
    }
    if (axis_raw.dot(axis) < 0) axis = -axis;
    return theta * axis.normalized();
  }
  return theta / (2.0 * std::sin(theta)) * axis_raw;
}

Mat3 right_jacobian_inv(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 wx = hat(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + 0.5 * wx + wx * wx / 12.0;
  }
  const double theta = std::sqrt(theta2);
  const double c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * wx + c * wx * wx;
}

Mat3 orthonormalize(const Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Mat3 out = u * v.transpose();
  if (out.determinant() < 0) {
    u.col(2) *= -1.0;
    out = u * v.transpose();
  }
  return out;
}

}  // namespace toncal::so3
