#include "toncal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "toncal/log.hpp"

namespace toncal::est {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kTon: return "ton";
    case Variant::kSir: return "sir";
    case Variant::kEkf: return "ekf";
    case Variant::kFvonOnly: return "fvon-only";
    case Variant::kTpnOnly: return "tpn-only";
  }
  return "unknown";
}

Variant variant_from_name(const std::string& name) {
  if (name == "ton") return Variant::kTon;
  if (name == "sir") return Variant::kSir;
  if (name == "ekf") return Variant::kEkf;
  if (name == "fvon-only") return Variant::kFvonOnly;
  if (name == "tpn-only") return Variant::kTpnOnly;
  throw std::invalid_argument("unknown pipeline variant: " + name);
}

namespace {

bool variant_uses_fvon(Variant v) {
  return v == Variant::kTon || v == Variant::kEkf || v == Variant::kFvonOnly;
}

bool variant_uses_tpn(Variant v) {
  return v == Variant::kTon || v == Variant::kEkf || v == Variant::kTpnOnly;
}

Vec3 camera_center(const FrameState& f, const sim::SensorRig& rig) {
  return f.p_wb - f.r_wb * (rig.r_cb.transpose() * rig.p_cb);
}

Vec3 pixel_ray_world(const FrameState& f, const Vec2& z, const sim::SensorRig& rig) {
  const Vec3 dc((z.x() - rig.cx) / rig.fx, (z.y() - rig.cy) / rig.fy, 1.0);
  return (f.r_wb * (rig.r_cb.transpose() * dc)).normalized();
}

// Linear midpoint-of-rays triangulation; falls back to a fixed-depth point on
// the first ray when the geometry is degenerate (tiny baseline, pure rotation).
Vec3 triangulate(const std::vector<std::pair<const FrameState*, Vec2>>& obs,
                 const sim::SensorRig& rig) {
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (const auto& [f, z] : obs) {
    const Vec3 o = camera_center(*f, rig);
    const Vec3 d = pixel_ray_world(*f, z, rig);
    const Mat3 m = Mat3::Identity() - d * d.transpose();
    a += m;
    b += m * o;
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> es(a);
  const double fallback_depth = 5.0;
  if (es.eigenvalues()[0] < 1e-6) {
    const Vec3 o = camera_center(*obs.front().first, rig);
    return o + fallback_depth * pixel_ray_world(*obs.front().first, obs.front().second, rig);
  }
  const Vec3 w = a.ldlt().solve(b);
  // Reject points behind the first camera.
  const Vec3 xc = sim::camera_point(obs.front().first->r_wb, obs.front().first->p_wb, w, rig);
  if (xc.z() <= rig.near_plane) {
    const Vec3 o = camera_center(*obs.front().first, rig);
    return o + fallback_depth * pixel_ray_world(*obs.front().first, obs.front().second, rig);
  }
  return w;
}

struct WindowFeature {
  int fid = 0;
  int slot = 0;
  int first_obs_frame = 0;   // first in-window frame
  bool new_in_window = false;  // track born inside this window
};

}  // namespace

PipelineResult run_pipeline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                            const PipelineConfig& config) {
  if (config.window < 2) throw std::invalid_argument("pipeline: window must be >= 2 frames");
  if (config.stride < 1) throw std::invalid_argument("pipeline: stride must be >= 1");
  if (tracks.frame_features.size() != dataset.frames.size())
    throw std::invalid_argument("pipeline: tracks and dataset frame counts differ");

  const sim::SensorRig& rig = dataset.config.rig;
  const int n_frames = static_cast<int>(dataset.frames.size());
  const double frame_dt = 1.0 / rig.cam_rate;

  ImuNoise noise = config.imu_noise;
  if (noise.gyro_sigma <= 0.0) noise.gyro_sigma = rig.gyro_noise_sigma;
  if (noise.accel_sigma <= 0.0) noise.accel_sigma = rig.accel_noise_sigma;

  SolverConfig solver = config.solver;
  solver.td_clamp = 0.5 * frame_dt;
  solver.pixel_sigma = std::max(rig.pixel_noise_sigma, solver.pixel_sigma);

  PipelineResult result;
  std::map<int, FrameState> est_frames;
  std::map<int, Vec3> est_points;
  std::deque<double> tpn_buffer;
  double td_prev = config.td_init;
  bool has_td_prev = false;
  double ekf_var = config.td_prior_var;

  // Online weakly-supervised networks: parameters persist across windows,
  // each window continues training on its own labels.
  nets::ItsFvon its_net = nets::ItsFvon::create(config.net_seed, config.its_train);
  nets::F2fFvon f2f_net = nets::F2fFvon::create(config.net_seed, config.f2f_train);
  nets::Tpn tpn_net = nets::Tpn::create(config.net_seed, config.tpn_train);

  const bool use_fvon = variant_uses_fvon(config.variant);
  const bool use_tpn = variant_uses_tpn(config.variant);

  int window_index = 0;
  for (int k0 = 0; k0 + config.window <= n_frames; k0 += config.stride, ++window_index) {
    const int k1 = k0 + config.window - 1;
    WindowReport rep;
    rep.window_index = window_index;
    rep.frame_first = k0;
    rep.frame_last = k1;

    // --- Frame states: reuse previous estimates, propagate the rest.
    WindowState state;
    state.frame_ids.resize(config.window);
    state.frames.resize(config.window);
    std::vector<ImuFactor> imu_factors;
    for (int k = k0; k <= k1; ++k) state.frame_ids[k - k0] = k;

    auto stamp_of = [&](int k) { return dataset.frames[k].stamp; };
    auto ensure_estimate = [&](int k) -> FrameState {
      auto it = est_frames.find(k);
      if (it != est_frames.end()) return it->second;
      if (k == 0) {
        const auto& f0 = dataset.frames[0];
        return FrameState{f0.r_wb, f0.p_wb, f0.v_w};
      }
      // Walk back to the newest known frame and propagate forward.
      int base = k - 1;
      while (base > 0 && est_frames.find(base) == est_frames.end()) --base;
      FrameState s;
      if (est_frames.count(base)) {
        s = est_frames.at(base);
      } else {
        const auto& f0 = dataset.frames[0];
        s = FrameState{f0.r_wb, f0.p_wb, f0.v_w};
      }
      for (int j = base; j < k; ++j) {
        const ImuFactor f = preintegrate_imu(dataset.imu, stamp_of(j), stamp_of(j + 1), noise);
        s = propagate_state(s, f, rig.gravity);
      }
      return s;
    };

    for (int k = k0; k <= k1; ++k) {
      state.frames[k - k0] = ensure_estimate(k);
      est_frames[k] = state.frames[k - k0];
      if (k > k0) {
        ImuFactor f = preintegrate_imu(dataset.imu, stamp_of(k - 1), stamp_of(k), noise);
        f.frame_slot = k - k0 - 1;
        imu_factors.push_back(std::move(f));
      }
    }

    // --- Feature selection: longest in-window tracks first, capped.
    std::vector<std::pair<int, int>> candidates;  // (count, fid)
    for (const auto& track : tracks.tracks) {
      const int lo = std::max(track.first_frame(), k0);
      const int hi = std::min(track.last_frame(), k1);
      const int count = hi - lo + 1;
      if (count >= config.min_track_obs) candidates.emplace_back(count, track.feature_id);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) {
                       return a.first != b.first ? a.first > b.first : a.second < b.second;
                     });
    if (static_cast<int>(candidates.size()) > config.max_features) {
      candidates.resize(config.max_features);
    }

    std::vector<WindowFeature> feats;
    for (const auto& [count, fid] : candidates) {
      (void)count;
      const auto& track = tracks.track(fid);
      WindowFeature wf;
      wf.fid = fid;
      wf.slot = static_cast<int>(feats.size());
      wf.first_obs_frame = std::max(track.first_frame(), k0);
      wf.new_in_window = track.first_frame() >= k0;
      feats.push_back(wf);
    }

    // World points for depth initialization and F2F geometry: previous
    // window's estimate when available, else triangulated from this window.
    std::vector<Vec3> world_points(feats.size());
    state.feature_ids.resize(feats.size());
    state.depths.resize(feats.size());
    state.anchor_slots.resize(feats.size());
    state.anchor_pixels.resize(feats.size());
    state.anchor_velocities.assign(feats.size(), Vec2::Zero());
    for (const auto& wf : feats) {
      state.feature_ids[wf.slot] = wf.fid;
      const auto& track = tracks.track(wf.fid);
      auto it = est_points.find(wf.fid);
      if (it != est_points.end()) {
        world_points[wf.slot] = it->second;
      } else {
        std::vector<std::pair<const FrameState*, Vec2>> obs;
        for (const auto& o : track.obs) {
          if (o.frame < k0 || o.frame > k1) continue;
          obs.emplace_back(&state.frames[o.frame - k0], o.pixel);
        }
        world_points[wf.slot] = triangulate(obs, rig);
      }
      const fe::Observation* anchor_obs = track.find(wf.first_obs_frame);
      state.anchor_slots[wf.slot] = wf.first_obs_frame - k0;
      state.anchor_pixels[wf.slot] = anchor_obs->pixel;
      const FrameState& fa = state.frames[state.anchor_slots[wf.slot]];
      const Vec3 xc = sim::camera_point(fa.r_wb, fa.p_wb, world_points[wf.slot], rig);
      state.depths[wf.slot] = std::max(solver.min_depth, xc.z());
    }

    // --- Stage 1: constant-speed velocity labels of well-matched features.
    std::map<int, std::vector<std::pair<int, Vec2>>> labels_by_feature;  // fid -> (frame, V)
    std::map<int, std::vector<std::pair<int, Vec2>>> labels_by_frame;    // frame -> (fid, V)
    for (const auto& wf : feats) {
      const auto& track = tracks.track(wf.fid);
      for (const auto& o : track.obs) {
        if (o.frame < k0 || o.frame > k1) continue;
        const auto v = fe::constant_speed_velocity(track, o.frame);
        if (!v) continue;
        labels_by_feature[wf.fid].emplace_back(o.frame, *v);
        labels_by_frame[o.frame].emplace_back(wf.fid, *v);
      }
    }

    // --- Stage 2: FVON routing for features born inside the window.
    // fid -> (velocity, source)
    std::map<int, std::pair<Vec2, VelocitySource>> new_feature_velocity;
    std::vector<const WindowFeature*> its_queries, f2f_queries;
    for (const auto& wf : feats) {
      if (!wf.new_in_window) continue;
      const auto& track = tracks.track(wf.fid);
      const int f0 = wf.first_obs_frame;
      bool long_tracked = f0 + 3 <= k1;
      if (long_tracked) {
        long_tracked =
            fe::classify_feature(track, f0) == fe::FeatureClass::kNewLongTracked;
      }
      if (!use_fvon) {
        new_feature_velocity[wf.fid] = {Vec2::Zero(), VelocitySource::kZeroFallback};
      } else if (long_tracked) {
        its_queries.push_back(&wf);
      } else {
        f2f_queries.push_back(&wf);
      }
    }

    if (use_fvon) {
      // Continue training on every well-matched track's reversed in-window
      // velocity sequence, whether or not this window has queries.
      std::vector<std::vector<Vec2>> sequences;
      for (const auto& [fid, labels] : labels_by_feature) {
        if (labels.size() < 2) continue;
        std::vector<Vec2> seq;
        for (auto it = labels.rbegin(); it != labels.rend(); ++it) seq.push_back(it->second);
        sequences.push_back(std::move(seq));
      }
      std::stable_sort(sequences.begin(), sequences.end(),
                       [](const auto& a, const auto& b) { return a.size() > b.size(); });
      if (static_cast<int>(sequences.size()) > config.its_max_sequences) {
        sequences.resize(config.its_max_sequences);
      }
      if (!sequences.empty()) rep.its_loss = its_net.train(sequences);
      const bool its_ok = its_net.trained && !its_net.degenerate &&
                          its_net.final_loss < config.its_quality_gate;
      for (const auto* wf : its_queries) {
        std::vector<Vec2> future;
        for (const auto& [frame, v] : labels_by_feature[wf->fid]) {
          if (frame > wf->first_obs_frame) future.push_back(v);
        }
        std::reverse(future.begin(), future.end());  // future-to-past order
        if (!its_ok || future.empty()) {
          new_feature_velocity[wf->fid] = {Vec2::Zero(), VelocitySource::kZeroFallback};
          continue;
        }
        const auto pred = its_net.predict(future);
        new_feature_velocity[wf->fid] = {pred.velocity, pred.fallback
                                                           ? VelocitySource::kZeroFallback
                                                           : VelocitySource::kItsFvon};
        if (pred.fallback) new_feature_velocity[wf->fid].first = Vec2::Zero();
      }
    }

    if (!f2f_queries.empty()) {
      // Group queries by their first frame; one model per frame.
      std::map<int, std::vector<const WindowFeature*>> by_frame;
      for (const auto* wf : f2f_queries) by_frame[wf->first_obs_frame].push_back(wf);
      double loss_sum = 0.0;
      int loss_n = 0;
      for (const auto& [frame, queries] : by_frame) {
        std::vector<std::pair<Vec3, Vec2>> labels;
        const FrameState& fs = state.frames[frame - k0];
        for (const auto& [fid, v] : labels_by_frame[frame]) {
          auto slot_it = std::find(state.feature_ids.begin(), state.feature_ids.end(), fid);
          if (slot_it == state.feature_ids.end()) continue;
          const Vec3 xc = sim::camera_point(
              fs.r_wb, fs.p_wb, world_points[slot_it - state.feature_ids.begin()], rig);
          if (xc.z() <= rig.near_plane) continue;
          labels.emplace_back(xc, v);
        }
        bool ok = labels.size() >= 2;
        double loss = 0.0;
        if (ok) {
          loss = f2f_net.train(labels);
          if (f2f_net.trained && !f2f_net.degenerate) {
            loss_sum += loss;
            ++loss_n;
          }
          ok = f2f_net.trained && !f2f_net.degenerate && loss < config.f2f_quality_gate;
        }
        for (const auto* wf : queries) {
          const Vec3 xc = sim::camera_point(fs.r_wb, fs.p_wb, world_points[wf->slot], rig);
          if (!ok || xc.z() <= rig.near_plane) {
            new_feature_velocity[wf->fid] = {Vec2::Zero(), VelocitySource::kZeroFallback};
            continue;
          }
          const auto pred = f2f_net.predict(xc);
          new_feature_velocity[wf->fid] = {pred.velocity, pred.fallback
                                                             ? VelocitySource::kZeroFallback
                                                             : VelocitySource::kF2fFvon};
          if (pred.fallback) new_feature_velocity[wf->fid].first = Vec2::Zero();
        }
      }
      if (loss_n > 0) rep.f2f_loss = loss_sum / loss_n;
    }

    // --- Anchor velocities: Eq. 2 for previously tracked features, FVON (or
    // zero) for tracks born in this window. The anchor shift is where the
    // velocity of a first observation enters the projection model.
    for (const auto& wf : feats) {
      const auto& track = tracks.track(wf.fid);
      VelocitySource src = VelocitySource::kConstantSpeed;
      Vec2 v = Vec2::Zero();
      if (wf.new_in_window) {
        const auto& [pv, psrc] = new_feature_velocity.at(wf.fid);
        v = pv;
        src = psrc;
      } else {
        const auto cv = fe::constant_speed_velocity(track, wf.first_obs_frame);
        if (cv) {
          v = *cv;
        } else {
          src = VelocitySource::kZeroFallback;
        }
      }
      state.anchor_velocities[wf.slot] = v;
      switch (src) {
        case VelocitySource::kConstantSpeed: ++rep.n_wellmatched; break;
        case VelocitySource::kItsFvon: ++rep.n_its; break;
        case VelocitySource::kF2fFvon: ++rep.n_f2f; break;
        case VelocitySource::kZeroFallback: ++rep.n_fallback; break;
      }
    }

    // --- Visual factors for every non-anchor in-window observation.
    std::vector<VisualFactor> visual;
    for (const auto& wf : feats) {
      const auto& track = tracks.track(wf.fid);
      for (const auto& o : track.obs) {
        if (o.frame <= wf.first_obs_frame || o.frame > k1) continue;
        VisualFactor vf;
        vf.feature_slot = wf.slot;
        vf.frame_slot = o.frame - k0;
        vf.z = o.pixel;
        const auto v = fe::constant_speed_velocity(track, o.frame);
        if (v) {
          vf.velocity = *v;
          vf.source = VelocitySource::kConstantSpeed;
        } else {
          vf.velocity = Vec2::Zero();
          vf.source = VelocitySource::kZeroFallback;
        }
        visual.push_back(std::move(vf));
      }
    }

    // --- Stage 3: TPN label buffer from past window estimates.
    if (has_td_prev) {
      tpn_buffer.push_back(td_prev);
      while (static_cast<int>(tpn_buffer.size()) > config.tpn_buffer_cap) tpn_buffer.pop_front();
    }

    // --- Stage 4: offset prior (TPN prediction or random walk).
    double td_pred = has_td_prev ? td_prev : config.td_init;
    TdPriorFactor prior{td_pred, config.rw_prior_var};
    if (use_tpn && tpn_buffer.size() >= 2) {
      const std::vector<double> labels(tpn_buffer.begin(), tpn_buffer.end());
      rep.tpn_loss = tpn_net.train(labels);
      const auto pred = tpn_net.predict(labels);
      td_pred = pred.td;
      prior = TdPriorFactor{td_pred, config.td_prior_var};
    }

    TdPropagation ekf_prop;
    if (config.variant == Variant::kEkf) {
      const double dt_est = config.stride * frame_dt;
      ekf_prop = ekf_propagate_td(has_td_prev ? td_prev : config.td_init, td_pred, dt_est,
                                  ekf_var, config.ekf_process_noise);
      prior = TdPriorFactor{ekf_prop.mean, std::max(ekf_prop.variance, 1e-12)};
      td_pred = ekf_prop.mean;
    }
    rep.td_pred = td_pred;

    state.td = has_td_prev ? td_prev : config.td_init;
    if (config.variant == Variant::kEkf) state.td = ekf_prop.mean;

    // --- Solve; a failed window rolls back to its propagated states.
    const WindowState snapshot = state;
    try {
      const SolveReport sr = solve_window(state, visual, imu_factors, prior, rig, solver);
      rep.iterations = sr.iterations;
      rep.cost_initial = sr.initial_cost;
      rep.cost_final = sr.final_cost;
      rep.diverged = sr.diverged;
      rep.td_frozen = sr.td_frozen;
      if (sr.diverged) state = snapshot;
    } catch (const std::invalid_argument& e) {
      TONCAL_DEBUG("window %d skipped: %s", window_index, e.what());
      rep.diverged = true;
      state = snapshot;
    }

    rep.td_est = state.td;
    if (config.variant == Variant::kEkf) {
      const auto post = ekf_update_td(ekf_prop, state.td, config.ekf_meas_var);
      rep.td_est = post.mean;
      ekf_var = post.variance;
    }

    // --- Commit estimates.
    for (int k = k0; k <= k1; ++k) est_frames[k] = state.frames[k - k0];
    for (const auto& wf : feats) {
      est_points[wf.fid] = state.feature_world_point(wf.slot, rig, state.td);
    }

    rep.td_true_mean = 0.0;
    for (int k = k0; k <= k1; ++k) rep.td_true_mean += dataset.frames[k].td_true;
    rep.td_true_mean /= config.window;
    rep.v_end = state.frames.back().v_w;

    td_prev = rep.td_est;
    has_td_prev = true;
    result.windows.push_back(rep);
  }

  result.trajectory.reserve(est_frames.size());
  for (const auto& [k, f] : est_frames) {
    result.trajectory.push_back({k, dataset.frames[k].stamp, f.r_wb, f.p_wb, f.v_w});
  }
  result.tpn_buffer.assign(tpn_buffer.begin(), tpn_buffer.end());
  return result;
}

PipelineResult run_ton_pipeline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                                PipelineConfig config) {
  config.variant = Variant::kTon;
  return run_pipeline(dataset, tracks, config);
}

PipelineResult run_sir_baseline(const sim::SimDataset& dataset, const fe::TrackTable& tracks,
                                PipelineConfig config) {
  config.variant = Variant::kSir;
  return run_pipeline(dataset, tracks, config);
}

}  // namespace toncal::est
