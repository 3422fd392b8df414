#include "toncal/trajectory.hpp"

#include <cmath>
#include <stdexcept>

namespace toncal::sim {

double Channel::eval(double t) const {
  double v = offset + slope * t;
  for (const auto& s : terms) v += s.amp * std::sin(s.freq * t + s.phase);
  return v;
}

double Channel::d1(double t) const {
  double v = slope;
  for (const auto& s : terms) v += s.amp * s.freq * std::cos(s.freq * t + s.phase);
  return v;
}

double Channel::d2(double t) const {
  double v = 0.0;
  for (const auto& s : terms) v -= s.amp * s.freq * s.freq * std::sin(s.freq * t + s.phase);
  return v;
}

const char* profile_name(Profile p) {
  switch (p) {
    case Profile::kCircle: return "circle";
    case Profile::kFigure8: return "figure8";
    case Profile::kAggressive: return "aggressive";
  }
  return "unknown";
}

Profile profile_from_name(const std::string& name) {
  if (name == "circle") return Profile::kCircle;
  if (name == "figure8") return Profile::kFigure8;
  if (name == "aggressive") return Profile::kAggressive;
  throw std::invalid_argument("unknown trajectory profile: " + name);
}

Trajectory::Trajectory(Profile profile, Channel px, Channel py, Channel pz, Channel yaw,
                       Channel pitch, Channel roll, double duration)
    : profile_(profile),
      px_(std::move(px)),
      py_(std::move(py)),
      pz_(std::move(pz)),
      yaw_(std::move(yaw)),
      pitch_(std::move(pitch)),
      roll_(std::move(roll)),
      duration_(duration) {}

Vec3 Trajectory::position(double t) const {
  return Vec3(px_.eval(t), py_.eval(t), pz_.eval(t));
}

Vec3 Trajectory::velocity(double t) const { return Vec3(px_.d1(t), py_.d1(t), pz_.d1(t)); }

Vec3 Trajectory::acceleration(double t) const {
  return Vec3(px_.d2(t), py_.d2(t), pz_.d2(t));
}

namespace {

Mat3 rot_z(double a) {
  Mat3 m;
  m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return m;
}

Mat3 rot_y(double a) {
  Mat3 m;
  m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return m;
}

Mat3 rot_x(double a) {
  Mat3 m;
  m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return m;
}

Mat3 drot_z(double a) {
  Mat3 m;
  m << -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a), 0, 0, 0, 0;
  return m;
}

Mat3 drot_y(double a) {
  Mat3 m;
  m << -std::sin(a), 0, std::cos(a), 0, 0, 0, -std::cos(a), 0, -std::sin(a);
  return m;
}

Mat3 drot_x(double a) {
  Mat3 m;
  m << 0, 0, 0, 0, -std::sin(a), -std::cos(a), 0, std::cos(a), -std::sin(a);
  return m;
}

}  // namespace

Mat3 Trajectory::rotation(double t) const {
  return rot_z(yaw_.eval(t)) * rot_y(pitch_.eval(t)) * rot_x(roll_.eval(t));
}

Mat3 Trajectory::rotation_dot(double t) const {
  const double y = yaw_.eval(t), p = pitch_.eval(t), r = roll_.eval(t);
  const Mat3 rz = rot_z(y), ry = rot_y(p), rx = rot_x(r);
  return yaw_.d1(t) * drot_z(y) * ry * rx + pitch_.d1(t) * rz * drot_y(p) * rx +
         roll_.d1(t) * rz * ry * drot_x(r);
}

Vec3 Trajectory::angular_velocity_body(double t) const {
  // R^T Rdot is skew; take its antisymmetric part to shed rounding noise.
  const Mat3 m = rotation(t).transpose() * rotation_dot(t);
  return so3::vee(0.5 * (m - m.transpose()));
}

Trajectory make_trajectory(Profile profile, const ProfileParams& params) {
  if (params.radius <= 0.0) throw std::invalid_argument("trajectory radius/scale must be > 0");
  if (params.rate < 0.0) throw std::invalid_argument("trajectory rate must be >= 0");
  if (params.duration <= 0.0) throw std::invalid_argument("trajectory duration must be > 0");

  const double r = params.radius;
  const double w = params.rate;
  Channel px, py, pz, yaw, pitch, roll;
  switch (profile) {
    case Profile::kCircle:
      // p = (r cos wt, r sin wt, 0), yaw follows the tangent.
      px.terms = {{r, w, M_PI / 2.0}};
      py.terms = {{r, w, 0.0}};
      yaw.offset = M_PI / 2.0;
      yaw.slope = w;
      break;
    case Profile::kFigure8:
      // Lissajous lemniscate with a gentle bob and sweeping yaw.
      px.terms = {{r, w, 0.0}};
      py.terms = {{0.5 * r, 2.0 * w, 0.0}};
      pz.terms = {{0.15 * r, w, 0.7}};
      yaw.terms = {{0.8, w, 0.0}};
      pitch.terms = {{0.12, 2.0 * w, 0.3}};
      roll.terms = {{0.08, 2.0 * w, 1.1}};
      break;
    case Profile::kAggressive:
      // Multi-frequency translation with sustained fast yaw; peak angular
      // speed > 1.5 rad/s and peak linear speed > 3 m/s at default params.
      px.terms = {{4.0 * r, w, 0.0}};
      py.terms = {{3.0 * r, 1.7 * w, 0.8}};
      pz.terms = {{1.2 * r, 0.9 * w, 0.3}};
      yaw.slope = 0.6;
      yaw.terms = {{1.3, 1.5 * w, 0.0}};
      pitch.terms = {{0.35, 1.3 * w, 1.0}};
      roll.terms = {{0.3, 1.6 * w, 2.0}};
      break;
  }
  return Trajectory(profile, px, py, pz, yaw, pitch, roll, params.duration);
}

}  // namespace toncal::sim
