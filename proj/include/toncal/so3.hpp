#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace toncal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

namespace so3 {

Mat3 hat(const Vec3& w);
Vec3 vee(const Mat3& m);

// Rodrigues formula with Taylor fallback near zero angle.
Mat3 exp(const Vec3& w);

// Inverse of exp; stable near identity and near pi.
Vec3 log(const Mat3& r);

// Inverse of the right Jacobian of exp, used in rotation residuals.
Mat3 right_jacobian_inv(const Vec3& w);

// Nearest rotation matrix (SVD projection).
Mat3 orthonormalize(const Mat3& r);

}  // namespace so3
}  // namespace toncal
