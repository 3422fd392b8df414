#pragma once

#include <map>
#include <optional>
#include <vector>

#include "toncal/sim.hpp"

namespace toncal::fe {

using sim::Rng;

struct Observation {
  int feature_id = 0;
  int frame = 0;
  Vec2 pixel = Vec2::Zero();
  double stamp = 0.0;  // reported timestamp
};

// Per-frame track survival probability as a function of ground-truth motion.
// clamp(base - angular_slope*|w| - linear_slope*|v|, floor, 1).
struct DropoutModel {
  double base_survival = 1.0;
  double angular_slope = 0.0;  // per rad/s, >= 0
  double linear_slope = 0.0;   // per m/s, >= 0
  double min_survival = 0.0;
  int inject_per_frame = 10;
  int initial_inject = 60;

  double survival(double angular_speed, double linear_speed) const;
  void validate() const;
};

struct Track {
  int feature_id = 0;
  int landmark_id = 0;
  std::vector<Observation> obs;  // frame indices strictly increasing, contiguous

  const Observation* find(int frame) const;
  int first_frame() const { return obs.front().frame; }
  int last_frame() const { return obs.back().frame; }
};

struct TrackTable {
  std::vector<Track> tracks;                    // indexed by feature id
  std::vector<std::vector<int>> frame_features; // frame -> visible feature ids

  const Track& track(int feature_id) const { return tracks.at(feature_id); }
};

enum class FeatureClass { kWellMatched, kNewLongTracked, kNewShortTracked };

const char* feature_class_name(FeatureClass c);

// Observations from true poses at true sample times plus pixel noise, with
// per-frame dropout and bounded re-detection. A dropped feature id is retired
// for good; re-detection of the same landmark opens a new id.
TrackTable track_features(const sim::SimDataset& dataset, const DropoutModel& dropout, Rng& rng);

// Eq-2 style constant-speed velocity from the previous observation, on
// reported stamps. Absent when frame-1 is not in the track. Throws
// std::runtime_error on equal stamps.
std::optional<Vec2> constant_speed_velocity(const Track& track, int frame);

// WellMatched if seen at frame-1, else NewLongTracked when the next `horizon`
// frames are all present, else NewShortTracked. Requires an observation at
// `frame`.
FeatureClass classify_feature(const Track& track, int frame, int horizon = 3);

}  // namespace toncal::fe
