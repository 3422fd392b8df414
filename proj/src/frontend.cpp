#include "toncal/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace toncal::fe {

double DropoutModel::survival(double angular_speed, double linear_speed) const {
  const double p = base_survival - angular_slope * angular_speed - linear_slope * linear_speed;
  return std::clamp(p, min_survival, 1.0);
}

void DropoutModel::validate() const {
  // base above 1 is allowed: it sets a motion dead zone before dropout
  // starts; the survival output itself is clamped to [0,1].
  if (base_survival < 0.0)
    throw std::invalid_argument("dropout: base_survival must be >= 0");
  if (angular_slope < 0.0 || linear_slope < 0.0)
    throw std::invalid_argument("dropout: slopes must be >= 0");
  if (min_survival < 0.0 || min_survival > 1.0)
    throw std::invalid_argument("dropout: min_survival must be in [0,1]");
  if (inject_per_frame < 0 || initial_inject < 0)
    throw std::invalid_argument("dropout: injection counts must be >= 0");
}

const Observation* Track::find(int frame) const {
  auto it = std::lower_bound(obs.begin(), obs.end(), frame,
                             [](const Observation& o, int f) { return o.frame < f; });
  if (it == obs.end() || it->frame != frame) return nullptr;
  return &*it;
}

const char* feature_class_name(FeatureClass c) {
  switch (c) {
    case FeatureClass::kWellMatched: return "well_matched";
    case FeatureClass::kNewLongTracked: return "new_long_tracked";
    case FeatureClass::kNewShortTracked: return "new_short_tracked";
  }
  return "unknown";
}

TrackTable track_features(const sim::SimDataset& dataset, const DropoutModel& dropout,
                          Rng& rng) {
  dropout.validate();
  const auto& rig = dataset.config.rig;
  TrackTable table;
  table.frame_features.resize(dataset.frames.size());

  // landmark id -> active feature id, -1 when untracked.
  std::vector<int> active(dataset.landmarks.size(), -1);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> pix(0.0, rig.pixel_noise_sigma);
  std::vector<std::optional<Vec2>> proj;

  for (const auto& frame : dataset.frames) {
    sim::project_landmarks(frame.r_wb, frame.p_wb, dataset.landmarks, rig, proj);
    const double p_survive =
        dropout.survival(frame.omega_body.norm(), frame.v_w.norm());

    auto observe = [&](int lm, int fid) {
      Vec2 z = *proj[lm];
      if (rig.pixel_noise_sigma > 0.0) z += Vec2(pix(rng), pix(rng));
      table.tracks[fid].obs.push_back({fid, frame.index, z, frame.stamp});
      table.frame_features[frame.index].push_back(fid);
    };

    // Survival pass over currently tracked landmarks, in landmark order so
    // the rng stream is reproducible.
    for (std::size_t lm = 0; lm < active.size(); ++lm) {
      if (active[lm] < 0) continue;
      if (!proj[lm] || u01(rng) >= p_survive) {
        active[lm] = -1;  // retired; this feature id never reappears
        continue;
      }
      observe(static_cast<int>(lm), active[lm]);
    }

    // Inject new features from in-view landmarks without an active track.
    const int budget = frame.index == 0 ? dropout.initial_inject : dropout.inject_per_frame;
    std::vector<int> candidates;
    for (std::size_t lm = 0; lm < active.size(); ++lm) {
      if (active[lm] < 0 && proj[lm]) candidates.push_back(static_cast<int>(lm));
    }
    for (int n = 0; n < budget && !candidates.empty(); ++n) {
      std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
      const std::size_t j = pick(rng);
      const int lm = candidates[j];
      candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(j));
      const int fid = static_cast<int>(table.tracks.size());
      table.tracks.push_back({fid, lm, {}});
      active[lm] = fid;
      observe(lm, fid);
    }
  }
  return table;
}

std::optional<Vec2> constant_speed_velocity(const Track& track, int frame) {
  const Observation* cur = track.find(frame);
  const Observation* prev = track.find(frame - 1);
  if (cur == nullptr || prev == nullptr) return std::nullopt;
  const double dt = cur->stamp - prev->stamp;
  if (dt == 0.0) throw std::runtime_error("constant_speed_velocity: degenerate timestamps");
  return (cur->pixel - prev->pixel) / dt;
}

FeatureClass classify_feature(const Track& track, int frame, int horizon) {
  if (track.find(frame) == nullptr)
    throw std::invalid_argument("classify_feature: feature not observed at frame");
  if (track.find(frame - 1) != nullptr) return FeatureClass::kWellMatched;
  for (int i = 1; i <= horizon; ++i) {
    if (track.find(frame + i) == nullptr) return FeatureClass::kNewShortTracked;
  }
  return FeatureClass::kNewLongTracked;
}

}  // namespace toncal::fe
