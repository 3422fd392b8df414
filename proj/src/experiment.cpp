#include "toncal/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "toncal/log.hpp"
#include "toncal/parallel.hpp"
#include "toncal/so3.hpp"

namespace toncal {

namespace {

using Json = nlohmann::json;

const Json& require(const Json& j, const std::string& field, const std::string& context) {
  if (!j.contains(field)) {
    throw std::invalid_argument("config: missing required field '" + context + field + "'");
  }
  return j.at(field);
}

double get_or(const Json& j, const std::string& field, double fallback) {
  return j.contains(field) ? j.at(field).get<double>() : fallback;
}

int get_or(const Json& j, const std::string& field, int fallback) {
  return j.contains(field) ? j.at(field).get<int>() : fallback;
}

nets::TrainConfig parse_train(const Json& j, nets::TrainConfig base) {
  base.learning_rate = get_or(j, "lr", base.learning_rate);
  base.max_epochs = get_or(j, "epochs", base.max_epochs);
  base.stop_loss = get_or(j, "stop_loss", base.stop_loss);
  return base;
}

std::string offset_tag(double offset_ms) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+g", offset_ms);
  return buf;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
  }
  ExperimentConfig c;
  c.version = require(j, "version", "").get<int>();
  if (c.version != 1) throw std::invalid_argument("config: unsupported version");
  c.seed = require(j, "seed", "").get<std::uint64_t>();
  c.sim.seed = c.seed;

  const Json& traj = require(j, "trajectory", "");
  c.sim.profile = sim::profile_from_name(
      require(traj, "profile", "trajectory.").get<std::string>());
  c.sim.profile_params.radius = get_or(traj, "scale", 1.0);
  c.sim.profile_params.rate = get_or(traj, "rate", 1.0);
  c.sim.profile_params.duration = get_or(traj, "duration_s", 30.0);

  c.sim.rig = sim::default_rig();
  if (j.contains("rig")) {
    const Json& r = j.at("rig");
    c.sim.rig.fx = get_or(r, "fx", c.sim.rig.fx);
    c.sim.rig.fy = get_or(r, "fy", c.sim.rig.fy);
    c.sim.rig.cx = get_or(r, "cx", c.sim.rig.cx);
    c.sim.rig.cy = get_or(r, "cy", c.sim.rig.cy);
    c.sim.rig.width = get_or(r, "width", c.sim.rig.width);
    c.sim.rig.height = get_or(r, "height", c.sim.rig.height);
    c.sim.rig.cam_rate = get_or(r, "cam_rate_hz", c.sim.rig.cam_rate);
    c.sim.rig.imu_rate = get_or(r, "imu_rate_hz", c.sim.rig.imu_rate);
    c.sim.rig.pixel_noise_sigma = get_or(r, "pixel_noise_px", c.sim.rig.pixel_noise_sigma);
    c.sim.rig.gyro_noise_sigma = get_or(r, "gyro_noise", c.sim.rig.gyro_noise_sigma);
    c.sim.rig.accel_noise_sigma = get_or(r, "accel_noise", c.sim.rig.accel_noise_sigma);
  }
  c.sim.rig.validate();

  const Json& off = require(j, "offset", "");
  const double initial_ms = require(off, "initial_ms", "offset.").get<double>();
  const double drift_ms_per_s = get_or(off, "drift_ms_per_s", 0.0);
  const double noise_ms = get_or(off, "noise_ms", 0.0);
  c.sim.offset.initial = initial_ms * 1e-3;
  // Per-second drift converted to a per-frame bias.
  c.sim.offset.bias_per_frame = drift_ms_per_s * 1e-3 / c.sim.rig.cam_rate;
  c.sim.offset.noise_sigma = noise_ms * 1e-3;

  if (j.contains("landmarks")) {
    const Json& l = j.at("landmarks");
    c.sim.landmark_count = get_or(l, "count", c.sim.landmark_count);
    c.sim.landmark_margin = get_or(l, "margin_m", c.sim.landmark_margin);
  }

  if (j.contains("dropout")) {
    const Json& d = j.at("dropout");
    c.dropout.base_survival = get_or(d, "base_survival", c.dropout.base_survival);
    c.dropout.angular_slope = get_or(d, "angular_slope", c.dropout.angular_slope);
    c.dropout.linear_slope = get_or(d, "linear_slope", c.dropout.linear_slope);
    c.dropout.min_survival = get_or(d, "min_survival", c.dropout.min_survival);
    c.dropout.inject_per_frame = get_or(d, "inject_per_frame", c.dropout.inject_per_frame);
    c.dropout.initial_inject = get_or(d, "initial_inject", c.dropout.initial_inject);
    c.dropout.validate();
  }

  const Json& p = require(j, "pipeline", "");
  c.pipeline.variant =
      est::variant_from_name(require(p, "variant", "pipeline.").get<std::string>());
  c.pipeline.window = get_or(p, "window", c.pipeline.window);
  c.pipeline.stride = get_or(p, "stride", c.pipeline.stride);
  c.pipeline.max_features = get_or(p, "max_features", c.pipeline.max_features);
  c.pipeline.its_max_sequences = get_or(p, "its_max_sequences", c.pipeline.its_max_sequences);
  const double td_prior_std_ms = get_or(p, "td_prior_std_ms", 1.0);
  const double rw_prior_std_ms = get_or(p, "rw_prior_std_ms", 1.0);
  c.pipeline.td_prior_var = std::pow(td_prior_std_ms * 1e-3, 2);
  c.pipeline.rw_prior_var = std::pow(rw_prior_std_ms * 1e-3, 2);
  c.pipeline.td_init = get_or(p, "td_init_ms", 0.0) * 1e-3;
  c.pipeline.net_seed = static_cast<std::uint64_t>(get_or(p, "net_seed", 7));
  c.pipeline.solver.pixel_sigma = get_or(p, "pixel_sigma", 1.0);
  c.pipeline.solver.max_iterations = get_or(p, "max_iterations", 25);
  c.pipeline.ekf_process_noise = std::pow(get_or(p, "ekf_process_std_ms", 0.1) * 1e-3, 2);
  c.pipeline.ekf_meas_var = std::pow(get_or(p, "ekf_meas_std_ms", 0.1) * 1e-3, 2);
  if (j.contains("train")) {
    const Json& t = j.at("train");
    if (t.contains("its")) c.pipeline.its_train = parse_train(t.at("its"), c.pipeline.its_train);
    if (t.contains("f2f")) c.pipeline.f2f_train = parse_train(t.at("f2f"), c.pipeline.f2f_train);
    if (t.contains("tpn")) c.pipeline.tpn_train = parse_train(t.at("tpn"), c.pipeline.tpn_train);
  }

  if (j.contains("metrics")) {
    const Json& m = j.at("metrics");
    c.cit.eps1 = get_or(m, "eps1_ms", 1.0) * 1e-3;
    c.cit.eps2 = get_or(m, "eps2_ms", 0.5) * 1e-3;
    if (m.contains("align")) {
      const std::string a = m.at("align").get<std::string>();
      if (a == "rigid") {
        c.align = metrics::Align::kRigid;
      } else if (a == "none") {
        c.align = metrics::Align::kNone;
      } else {
        throw std::invalid_argument("config: metrics.align must be 'none' or 'rigid'");
      }
    }
  } else {
    c.cit.eps1 = 1e-3;
    c.cit.eps2 = 5e-4;
  }
  c.cit.target = c.sim.offset.initial;
  c.cit.per_index_target =
      c.sim.offset.bias_per_frame != 0.0 || c.sim.offset.noise_sigma != 0.0;

  if (j.contains("dataset_dir")) c.dataset_dir = j.at("dataset_dir").get<std::string>();
  if (j.contains("export_tracks")) c.export_tracks = j.at("export_tracks").get<bool>();
  return c;
}

ExperimentConfig load_experiment_config(const io::fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  Json j{
      {"version", c.version},
      {"seed", c.seed},
      {"trajectory",
       {{"profile", sim::profile_name(c.sim.profile)},
        {"scale", c.sim.profile_params.radius},
        {"rate", c.sim.profile_params.rate},
        {"duration_s", c.sim.profile_params.duration}}},
      {"rig",
       {{"fx", c.sim.rig.fx},
        {"fy", c.sim.rig.fy},
        {"cx", c.sim.rig.cx},
        {"cy", c.sim.rig.cy},
        {"width", c.sim.rig.width},
        {"height", c.sim.rig.height},
        {"cam_rate_hz", c.sim.rig.cam_rate},
        {"imu_rate_hz", c.sim.rig.imu_rate},
        {"pixel_noise_px", c.sim.rig.pixel_noise_sigma},
        {"gyro_noise", c.sim.rig.gyro_noise_sigma},
        {"accel_noise", c.sim.rig.accel_noise_sigma}}},
      {"offset",
       {{"initial_ms", c.sim.offset.initial * 1e3},
        {"drift_ms_per_s", c.sim.offset.bias_per_frame * c.sim.rig.cam_rate * 1e3},
        {"noise_ms", c.sim.offset.noise_sigma * 1e3}}},
      {"landmarks",
       {{"count", c.sim.landmark_count}, {"margin_m", c.sim.landmark_margin}}},
      {"dropout",
       {{"base_survival", c.dropout.base_survival},
        {"angular_slope", c.dropout.angular_slope},
        {"linear_slope", c.dropout.linear_slope},
        {"min_survival", c.dropout.min_survival},
        {"inject_per_frame", c.dropout.inject_per_frame},
        {"initial_inject", c.dropout.initial_inject}}},
      {"pipeline",
       {{"variant", est::variant_name(c.pipeline.variant)},
        {"window", c.pipeline.window},
        {"stride", c.pipeline.stride},
        {"max_features", c.pipeline.max_features},
        {"its_max_sequences", c.pipeline.its_max_sequences},
        {"td_prior_std_ms", std::sqrt(c.pipeline.td_prior_var) * 1e3},
        {"rw_prior_std_ms", std::sqrt(c.pipeline.rw_prior_var) * 1e3},
        {"td_init_ms", c.pipeline.td_init * 1e3},
        {"net_seed", c.pipeline.net_seed},
        {"pixel_sigma", c.pipeline.solver.pixel_sigma},
        {"max_iterations", c.pipeline.solver.max_iterations},
        {"ekf_process_std_ms", std::sqrt(c.pipeline.ekf_process_noise) * 1e3},
        {"ekf_meas_std_ms", std::sqrt(c.pipeline.ekf_meas_var) * 1e3}}},
      {"train",
       {{"its",
         {{"lr", c.pipeline.its_train.learning_rate},
          {"epochs", c.pipeline.its_train.max_epochs},
          {"stop_loss", c.pipeline.its_train.stop_loss}}},
        {"f2f",
         {{"lr", c.pipeline.f2f_train.learning_rate},
          {"epochs", c.pipeline.f2f_train.max_epochs},
          {"stop_loss", c.pipeline.f2f_train.stop_loss}}},
        {"tpn",
         {{"lr", c.pipeline.tpn_train.learning_rate},
          {"epochs", c.pipeline.tpn_train.max_epochs},
          {"stop_loss", c.pipeline.tpn_train.stop_loss}}}}},
      {"metrics",
       {{"eps1_ms", c.cit.eps1 * 1e3},
        {"eps2_ms", c.cit.eps2 * 1e3},
        {"align", c.align == metrics::Align::kRigid ? "rigid" : "none"}}},
  };
  if (!c.dataset_dir.empty()) j["dataset_dir"] = c.dataset_dir;
  if (c.export_tracks) j["export_tracks"] = true;
  return j.dump(2);
}

void cmd_simulate(const ExperimentConfig& config, const io::fs::path& out_dir) {
  const sim::SimDataset ds = sim::generate_dataset(config.sim);
  io::write_dataset(out_dir, ds);
  TONCAL_INFO("simulate: %zu frames, %zu imu samples, %zu landmarks -> %s",
              ds.frames.size(), ds.imu.size(), ds.landmarks.size(), out_dir.c_str());
}

RunSummary cmd_run(const ExperimentConfig& config, const io::fs::path& out_dir) {
  io::fs::create_directories(out_dir);
  sim::SimDataset ds;
  if (!config.dataset_dir.empty()) {
    ds = io::load_dataset(config.dataset_dir);
  } else {
    ds = sim::generate_dataset(config.sim);
  }

  sim::Rng track_rng(config.seed + 0x9E3779B97F4A7C15ULL);
  const fe::TrackTable tracks = fe::track_features(ds, config.dropout, track_rng);
  if (config.export_tracks) io::write_tracks_csv(out_dir / "tracks.csv", tracks);

  const est::PipelineResult result = est::run_pipeline(ds, tracks, config.pipeline);
  io::write_windows_csv(out_dir / "windows.csv", result.windows);

  // Ground truth for the estimated trajectory is the pose at the stamp time.
  std::vector<Mat3> r_gt;
  std::vector<Vec3> p_gt;
  for (const auto& f : result.trajectory) {
    r_gt.push_back(ds.trajectory.rotation(f.stamp));
    p_gt.push_back(ds.trajectory.position(f.stamp));
  }
  io::write_traj_est_csv(out_dir / "traj_est.csv", result.trajectory, r_gt, p_gt);

  RunSummary summary;
  summary.n_windows = static_cast<int>(result.windows.size());

  metrics::OffsetSeries series;
  metrics::TrajectoryEstimate wtraj;  // window-granularity, for TPE
  for (const auto& w : result.windows) {
    series.index.push_back(w.window_index);
    series.td_est.push_back(w.td_est);
    series.td_gt.push_back(w.td_true_mean);
    summary.any_diverged = summary.any_diverged || w.diverged;
    wtraj.index.push_back(w.window_index);
    const auto& fe_last = result.trajectory[w.frame_last];
    wtraj.r_est.push_back(fe_last.r_wb);
    wtraj.p_est.push_back(fe_last.p_wb);
    wtraj.v_est.push_back(w.v_end);
    wtraj.r_gt.push_back(ds.trajectory.rotation(fe_last.stamp));
    wtraj.p_gt.push_back(ds.trajectory.position(fe_last.stamp));
  }

  Json mj;
  if (result.windows.size() >= 2) {
    summary.cit = metrics::cit(series, config.cit);
    const auto tpe_res = metrics::tpe(series, wtraj);
    summary.tpe_rmse = tpe_res.rmse;
    io::write_tpe_csv(out_dir / "tpe.csv", series.index, tpe_res);
  }

  metrics::TrajectoryEstimate ftraj;
  for (std::size_t i = 0; i < result.trajectory.size(); ++i) {
    const auto& f = result.trajectory[i];
    ftraj.index.push_back(f.frame);
    ftraj.r_est.push_back(f.r_wb);
    ftraj.p_est.push_back(f.p_wb);
    ftraj.v_est.push_back(f.v_w);
    ftraj.r_gt.push_back(r_gt[i]);
    ftraj.p_gt.push_back(p_gt[i]);
  }
  if (!ftraj.index.empty()) {
    const auto ate_res = metrics::ate(ftraj, config.align);
    summary.ape_rmse = ate_res.ape_rmse;
    summary.are_rmse = ate_res.are_rmse;
    io::write_ape_csv(out_dir / "ape.csv", ftraj.index, ate_res);
  }

  mj["cit"] = summary.cit ? Json(*summary.cit) : Json(nullptr);
  mj["tpe_rmse_m"] = summary.tpe_rmse;
  mj["ape_rmse_m"] = summary.ape_rmse;
  mj["are_rmse_deg"] = summary.are_rmse;
  mj["n_windows"] = summary.n_windows;
  mj["any_diverged"] = summary.any_diverged;
  mj["config"] = Json::parse(experiment_config_to_json(config));
  std::ofstream mf(out_dir / "metrics.json");
  mf << mj.dump(2) << "\n";

  TONCAL_INFO("run[%s]: %d windows, cit=%s tpe=%.3gmm ape=%.3gm",
              est::variant_name(config.pipeline.variant), summary.n_windows,
              summary.cit ? std::to_string(*summary.cit).c_str() : "none",
              summary.tpe_rmse * 1e3, summary.ape_rmse);
  return summary;
}

std::vector<SweepCell> cmd_sweep(const ExperimentConfig& config,
                                 const std::vector<double>& offsets_ms,
                                 const std::vector<std::uint64_t>& seeds,
                                 const io::fs::path& out_dir, int jobs) {
  if (offsets_ms.empty() || seeds.empty())
    throw std::invalid_argument("sweep: offsets and seeds must be non-empty");
  io::fs::create_directories(out_dir);
  const std::vector<est::Variant> variants = {est::Variant::kTon, est::Variant::kSir};

  std::vector<SweepCell> cells;
  for (const double off : offsets_ms) {
    for (const auto seed : seeds) {
      for (const auto v : variants) {
        SweepCell cell;
        cell.variant = est::variant_name(v);
        cell.offset_ms = off;
        cell.seed = seed;
        cells.push_back(cell);
      }
    }
  }

  const int n = static_cast<int>(cells.size());
  jobs = std::max(1, jobs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(jobs)
#endif
  for (int i = 0; i < n; ++i) {
    SweepCell& cell = cells[i];
    try {
      ExperimentConfig cfg = config;
      cfg.seed = cell.seed;
      cfg.sim.seed = cell.seed;
      cfg.sim.offset.initial = cell.offset_ms * 1e-3;
      cfg.cit.target = cfg.sim.offset.initial;
      cfg.pipeline.variant = est::variant_from_name(cell.variant);
      const std::string name = "cell_" + cell.variant + "_td" + offset_tag(cell.offset_ms) +
                               "_s" + std::to_string(cell.seed);
      const RunSummary s = cmd_run(cfg, out_dir / name);
      cell.cit = s.cit;
      cell.tpe_rmse = s.tpe_rmse;
      cell.ape_rmse = s.ape_rmse;
      cell.are_rmse = s.are_rmse;
      cell.diverged = s.any_diverged;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  }

  std::ofstream f(out_dir / "summary.csv");
  f << "variant,offset_ms,seed,cit,tpe_rmse_m,ape_rmse_m,are_rmse_deg,diverged,error\n";
  for (const auto& c : cells) {
    f << c.variant << "," << io::format_g17(c.offset_ms) << "," << c.seed << ","
      << (c.cit ? std::to_string(*c.cit) : "-1") << "," << io::format_g17(c.tpe_rmse) << ","
      << io::format_g17(c.ape_rmse) << "," << io::format_g17(c.are_rmse) << ","
      << (c.diverged ? 1 : 0) << "," << c.error << "\n";
  }
  return cells;
}

void cmd_plotdata(const io::fs::path& run_dir) {
  const auto windows = io::read_windows_csv(run_dir / "windows.csv");
  const auto traj = io::read_traj_est_csv(run_dir / "traj_est.csv");
  std::map<int, double> frame_stamp;
  for (const auto& r : traj) frame_stamp[r.frame] = r.stamp;

  {
    std::ofstream f(run_dir / "traj_xy.csv");
    f << "frame,est_x,est_y,gt_x,gt_y\n";
    for (const auto& r : traj) {
      f << r.frame << "," << io::format_g17(r.p_est.x()) << "," << io::format_g17(r.p_est.y())
        << "," << io::format_g17(r.p_gt.x()) << "," << io::format_g17(r.p_gt.y()) << "\n";
    }
  }
  {
    std::ofstream f(run_dir / "td_error_vs_time.csv");
    f << "window,stamp,td_est,td_true,td_error\n";
    for (const auto& w : windows) {
      f << w.window_index << "," << io::format_g17(frame_stamp[w.frame_last]) << ","
        << io::format_g17(w.td_est) << "," << io::format_g17(w.td_true_mean) << ","
        << io::format_g17(w.td_est - w.td_true_mean) << "\n";
    }
  }
  {
    const io::CsvTable ape = io::read_csv(run_dir / "ape.csv");
    std::ofstream f(run_dir / "ape_vs_time.csv");
    f << "frame,stamp,ape_m\n";
    for (const auto& row : ape.rows) {
      const int frame = static_cast<int>(row[0]);
      f << frame << "," << io::format_g17(frame_stamp[frame]) << "," << io::format_g17(row[1])
        << "\n";
    }
  }
  {
    const io::CsvTable tpe = io::read_csv(run_dir / "tpe.csv");
    std::map<int, int> window_last;
    for (const auto& w : windows) window_last[w.window_index] = w.frame_last;
    std::ofstream f(run_dir / "tpe_vs_time.csv");
    f << "window,stamp,tpe_norm\n";
    const int norm_col = tpe.column("tpe_norm");
    for (const auto& row : tpe.rows) {
      const int window = static_cast<int>(row[0]);
      f << window << "," << io::format_g17(frame_stamp[window_last[window]]) << ","
        << io::format_g17(row[norm_col]) << "\n";
    }
  }
}

// ---------------------------------------------------------------------------
// Jacobian verification suite

namespace {

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max(1e-4, std::abs(a) + std::abs(f));
}

double visual_factor_check() {
  sim::SensorRig rig = sim::default_rig();
  est::WindowState state;
  state.frames.resize(2);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto rand_vec = [&] { return Vec3(u(rng), u(rng), u(rng)); };
  state.frames[0].r_wb = so3::exp(0.2 * rand_vec());
  state.frames[0].p_wb = rand_vec();
  state.frames[1].r_wb = so3::exp(0.2 * rand_vec());
  state.frames[1].p_wb = state.frames[0].p_wb + 0.3 * rand_vec();
  state.feature_ids = {0};
  state.anchor_slots = {0};
  state.anchor_pixels = {Vec2(350.0, 210.0)};
  state.anchor_velocities = {Vec2(22.0, -14.0)};
  state.depths = {4.5};
  state.td = 0.004;

  est::VisualFactor factor;
  factor.feature_slot = 0;
  factor.frame_slot = 1;
  factor.velocity = Vec2(35.0, -20.0);
  factor.z = Vec2(300.0, 250.0);
  const double anchor_td = 0.002;

  const auto ev = est::eval_visual_factor(state, factor, rig, anchor_td);
  auto residual_of = [&](const est::WindowState& s) {
    return est::eval_visual_factor(s, factor, rig, anchor_td).residual;
  };

  const double h = 1e-6;
  double worst = 0.0;
  auto check_block = [&](auto mutate, const Eigen::MatrixXd& analytic, int dims) {
    for (int d = 0; d < dims; ++d) {
      est::WindowState sp = state, sm = state;
      mutate(sp, d, h);
      mutate(sm, d, -h);
      const Vec2 fd = (residual_of(sp) - residual_of(sm)) / (2.0 * h);
      for (int r = 0; r < 2; ++r) worst = std::max(worst, rel_err(analytic(r, d), fd[r]));
    }
  };
  for (int frame : {0, 1}) {
    check_block(
        [&, frame](est::WindowState& s, int d, double eps) {
          Vec3 dx = Vec3::Zero();
          dx[d] = eps;
          s.frames[frame].r_wb = s.frames[frame].r_wb * so3::exp(dx);
        },
        frame == 0 ? ev.j_anchor_theta : ev.j_theta, 3);
    check_block(
        [&, frame](est::WindowState& s, int d, double eps) { s.frames[frame].p_wb[d] += eps; },
        frame == 0 ? ev.j_anchor_p : ev.j_p, 3);
  }
  check_block([&](est::WindowState& s, int, double eps) { s.depths[0] += eps; },
              Eigen::MatrixXd(ev.j_depth), 1);
  check_block([&](est::WindowState& s, int, double eps) { s.td += eps; },
              Eigen::MatrixXd(ev.j_td), 1);
  return worst;
}

double imu_factor_check() {
  const auto traj =
      sim::make_trajectory(sim::Profile::kAggressive, {1.0, 1.2, 5.0});
  sim::SensorRig rig = sim::default_rig();
  sim::Rng rng(5);
  std::vector<sim::ImuSample> samples;
  for (int i = 0; i <= 40; ++i) samples.push_back(sim::sample_imu(traj, rig, i * 0.005, rng));
  est::ImuNoise noise;
  noise.gyro_sigma = 1e-3;
  noise.accel_sigma = 1e-2;
  const est::ImuFactor factor = est::preintegrate_imu(samples, 0.0, 0.2, noise);

  est::FrameState fi{traj.rotation(0.0), traj.position(0.0), traj.velocity(0.0)};
  est::FrameState fj{traj.rotation(0.2), traj.position(0.2), traj.velocity(0.2)};
  // Perturb away from the exact solution so the residual is non-trivial.
  fj.p_wb += Vec3(0.05, -0.02, 0.01);
  fj.v_w += Vec3(-0.1, 0.04, 0.02);
  fj.r_wb = fj.r_wb * so3::exp(Vec3(0.02, -0.01, 0.03));

  const auto ev = est::eval_imu_factor(fi, fj, factor, rig.gravity);
  auto residual_of = [&](const est::FrameState& a, const est::FrameState& b) {
    return est::eval_imu_factor(a, b, factor, rig.gravity).residual;
  };

  const double h = 1e-6;
  double worst = 0.0;
  auto check = [&](bool on_i, int block, const Eigen::Matrix<double, 9, 9>& analytic) {
    for (int d = 0; d < 3; ++d) {
      est::FrameState ap = fi, am = fi, bp = fj, bm = fj;
      auto apply = [&](est::FrameState& s, double eps) {
        Vec3 dx = Vec3::Zero();
        dx[d] = eps;
        if (block == 0) s.r_wb = s.r_wb * so3::exp(dx);
        if (block == 1) s.p_wb += dx;
        if (block == 2) s.v_w += dx;
      };
      if (on_i) {
        apply(ap, h);
        apply(am, -h);
      } else {
        apply(bp, h);
        apply(bm, -h);
      }
      const Eigen::Matrix<double, 9, 1> fd =
          (residual_of(ap, bp) - residual_of(am, bm)) / (2.0 * h);
      for (int r = 0; r < 9; ++r) {
        worst = std::max(worst, rel_err(analytic(r, 3 * block + d), fd[r]));
      }
    }
  };
  for (int block = 0; block < 3; ++block) {
    check(true, block, ev.j_i);
    check(false, block, ev.j_j);
  }
  return worst;
}

}  // namespace

double GradCheckReport::worst() const {
  return std::max({mlp, its_lstm, tpn_lstm, visual, imu});
}

GradCheckReport grad_check_report() {
  GradCheckReport rep;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  nets::MlpModel mlp = nets::MlpModel::create({3, 5, 5, 2}, 3);
  nets::MlpBatch mbatch;
  for (int i = 0; i < 16; ++i) {
    nets::Vec x(3), y(2);
    for (int d = 0; d < 3; ++d) x[d] = u(rng);
    for (int d = 0; d < 2; ++d) y[d] = u(rng);
    mbatch.emplace_back(x, y);
  }
  rep.mlp = nets::grad_check(mlp, mbatch);

  nets::LstmModel its = nets::LstmModel::create(2, 2, 2, 4);
  nets::LstmBatch ibatch;
  for (int s = 0; s < 4; ++s) {
    nets::LstmSequence seq;
    for (int t = 0; t < 5 + s; ++t) {
      nets::Vec x(2), y(2);
      for (int d = 0; d < 2; ++d) x[d] = u(rng);
      for (int d = 0; d < 2; ++d) y[d] = u(rng);
      seq.push_back({x, y});
    }
    ibatch.push_back(std::move(seq));
  }
  rep.its_lstm = nets::grad_check(its, ibatch);

  nets::LstmModel tpn = nets::LstmModel::create(1, 2, 1, 5);
  nets::LstmSequence tseq;
  for (int t = 0; t < 8; ++t) {
    tseq.push_back({nets::Vec::Constant(1, u(rng)), nets::Vec::Constant(1, u(rng))});
  }
  rep.tpn_lstm = nets::grad_check(tpn, {tseq});

  rep.visual = visual_factor_check();
  rep.imu = imu_factor_check();
  return rep;
}

}  // namespace toncal
