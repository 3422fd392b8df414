#pragma once

#include <string>
#include <vector>

#include "toncal/so3.hpp"

namespace toncal::sim {

// One analytic motion channel: offset + slope*t + sum of sinusoids.
struct Sinusoid {
  double amp = 0.0;
  double freq = 0.0;  // rad/s
  double phase = 0.0;
};

struct Channel {
  double offset = 0.0;
  double slope = 0.0;
  std::vector<Sinusoid> terms;

  double eval(double t) const;
  double d1(double t) const;
  double d2(double t) const;
};

enum class Profile { kCircle, kFigure8, kAggressive };

const char* profile_name(Profile p);
Profile profile_from_name(const std::string& name);

struct ProfileParams {
  double radius = 2.0;  // circle radius / figure8 & aggressive scale, meters
  double rate = 1.0;    // base angular rate, rad/s
  double duration = 30.0;
};

// Analytic world-from-body trajectory. Orientation is ZYX Euler
// (yaw about z, then pitch, then roll), each angle its own channel, so every
// derivative is closed form.
class Trajectory {
 public:
  Trajectory() = default;
  Trajectory(Profile profile, Channel px, Channel py, Channel pz, Channel yaw,
             Channel pitch, Channel roll, double duration);

  Vec3 position(double t) const;
  Vec3 velocity(double t) const;
  Vec3 acceleration(double t) const;
  Mat3 rotation(double t) const;           // world-from-body
  Vec3 angular_velocity_body(double t) const;

  double duration() const { return duration_; }
  Profile profile() const { return profile_; }

 private:
  Mat3 rotation_dot(double t) const;

  Profile profile_ = Profile::kCircle;
  Channel px_, py_, pz_;
  Channel yaw_, pitch_, roll_;
  double duration_ = 0.0;
};

// Throws std::invalid_argument on out-of-range parameters.
Trajectory make_trajectory(Profile profile, const ProfileParams& params);

}  // namespace toncal::sim
