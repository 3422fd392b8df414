#include "toncal/dataset_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace toncal::io {

namespace {

using Json = nlohmann::json;

struct File {
  std::FILE* f = nullptr;
  explicit File(const fs::path& path, const char* mode) : f(std::fopen(path.c_str(), mode)) {
    if (f == nullptr) throw std::runtime_error("cannot open file: " + path.string());
  }
  ~File() {
    if (f != nullptr) std::fclose(f);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing-input-file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string format_g12(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sim_config_to_json(const sim::SimConfig& config) {
  const auto& r = config.rig;
  Json j{
      {"profile", sim::profile_name(config.profile)},
      {"profile_params",
       {{"radius", config.profile_params.radius},
        {"rate", config.profile_params.rate},
        {"duration", config.profile_params.duration}}},
      {"rig",
       {{"fx", r.fx},
        {"fy", r.fy},
        {"cx", r.cx},
        {"cy", r.cy},
        {"width", r.width},
        {"height", r.height},
        {"cam_rate", r.cam_rate},
        {"imu_rate", r.imu_rate},
        {"pixel_noise_sigma", r.pixel_noise_sigma},
        {"gyro_noise_sigma", r.gyro_noise_sigma},
        {"accel_noise_sigma", r.accel_noise_sigma},
        {"near_plane", r.near_plane},
        {"gravity", {r.gravity.x(), r.gravity.y(), r.gravity.z()}},
        {"r_cb",
         {r.r_cb(0, 0), r.r_cb(0, 1), r.r_cb(0, 2), r.r_cb(1, 0), r.r_cb(1, 1), r.r_cb(1, 2),
          r.r_cb(2, 0), r.r_cb(2, 1), r.r_cb(2, 2)}},
        {"p_cb", {r.p_cb.x(), r.p_cb.y(), r.p_cb.z()}}}},
      {"offset",
       {{"initial", config.offset.initial},
        {"bias_per_frame", config.offset.bias_per_frame},
        {"noise_sigma", config.offset.noise_sigma}}},
      {"landmark_count", config.landmark_count},
      {"landmark_margin", config.landmark_margin},
      {"seed", config.seed},
  };
  return j.dump(2);
}

sim::SimConfig sim_config_from_json(const std::string& text) {
  const Json j = Json::parse(text);
  sim::SimConfig c;
  c.profile = sim::profile_from_name(j.at("profile").get<std::string>());
  const auto& pp = j.at("profile_params");
  c.profile_params.radius = pp.at("radius").get<double>();
  c.profile_params.rate = pp.at("rate").get<double>();
  c.profile_params.duration = pp.at("duration").get<double>();
  const auto& r = j.at("rig");
  c.rig.fx = r.at("fx").get<double>();
  c.rig.fy = r.at("fy").get<double>();
  c.rig.cx = r.at("cx").get<double>();
  c.rig.cy = r.at("cy").get<double>();
  c.rig.width = r.at("width").get<double>();
  c.rig.height = r.at("height").get<double>();
  c.rig.cam_rate = r.at("cam_rate").get<double>();
  c.rig.imu_rate = r.at("imu_rate").get<double>();
  c.rig.pixel_noise_sigma = r.at("pixel_noise_sigma").get<double>();
  c.rig.gyro_noise_sigma = r.at("gyro_noise_sigma").get<double>();
  c.rig.accel_noise_sigma = r.at("accel_noise_sigma").get<double>();
  c.rig.near_plane = r.at("near_plane").get<double>();
  const auto& g = r.at("gravity");
  c.rig.gravity = Vec3(g[0], g[1], g[2]);
  const auto& rcb = r.at("r_cb");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) c.rig.r_cb(i, k) = rcb[3 * i + k].get<double>();
  }
  const auto& pcb = r.at("p_cb");
  c.rig.p_cb = Vec3(pcb[0], pcb[1], pcb[2]);
  const auto& o = j.at("offset");
  c.offset.initial = o.at("initial").get<double>();
  c.offset.bias_per_frame = o.at("bias_per_frame").get<double>();
  c.offset.noise_sigma = o.at("noise_sigma").get<double>();
  c.landmark_count = j.at("landmark_count").get<int>();
  c.landmark_margin = j.at("landmark_margin").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_dataset(const fs::path& dir, const sim::SimDataset& dataset) {
  fs::create_directories(dir);
  {
    std::ofstream meta(dir / "meta.json");
    meta << sim_config_to_json(dataset.config) << "\n";
  }
  {
    File f(dir / "imu.csv", "w");
    std::fprintf(f.f, "t,wx,wy,wz,ax,ay,az\n");
    for (const auto& s : dataset.imu) {
      std::fprintf(f.f, "%s,%s,%s,%s,%s,%s,%s\n", format_g12(s.t).c_str(),
                   format_g12(s.omega.x()).c_str(), format_g12(s.omega.y()).c_str(),
                   format_g12(s.omega.z()).c_str(), format_g12(s.accel.x()).c_str(),
                   format_g12(s.accel.y()).c_str(), format_g12(s.accel.z()).c_str());
    }
  }
  {
    File f(dir / "frames.csv", "w");
    std::fprintf(f.f,
                 "k,stamp,true_t,td_true,qw,qx,qy,qz,px,py,pz,vx,vy,vz,wx,wy,wz\n");
    for (const auto& fr : dataset.frames) {
      const Quat q(fr.r_wb);
      std::fprintf(
          f.f, "%d,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s\n", fr.index,
          format_g12(fr.stamp).c_str(), format_g12(fr.true_time).c_str(),
          format_g12(fr.td_true).c_str(), format_g12(q.w()).c_str(), format_g12(q.x()).c_str(),
          format_g12(q.y()).c_str(), format_g12(q.z()).c_str(), format_g12(fr.p_wb.x()).c_str(),
          format_g12(fr.p_wb.y()).c_str(), format_g12(fr.p_wb.z()).c_str(),
          format_g12(fr.v_w.x()).c_str(), format_g12(fr.v_w.y()).c_str(),
          format_g12(fr.v_w.z()).c_str(), format_g12(fr.omega_body.x()).c_str(),
          format_g12(fr.omega_body.y()).c_str(), format_g12(fr.omega_body.z()).c_str());
    }
  }
  {
    File f(dir / "landmarks.csv", "w");
    std::fprintf(f.f, "id,x,y,z\n");
    for (std::size_t i = 0; i < dataset.landmarks.size(); ++i) {
      const auto& p = dataset.landmarks[i];
      std::fprintf(f.f, "%zu,%s,%s,%s\n", i, format_g12(p.x()).c_str(),
                   format_g12(p.y()).c_str(), format_g12(p.z()).c_str());
    }
  }
}

sim::SimDataset load_dataset(const fs::path& dir) {
  sim::SimDataset ds;
  ds.config = sim_config_from_json(read_text(dir / "meta.json"));
  ds.trajectory = sim::make_trajectory(ds.config.profile, ds.config.profile_params);

  const CsvTable imu = read_csv(dir / "imu.csv");
  for (const auto& row : imu.rows) {
    sim::ImuSample s;
    s.t = row[0];
    s.omega = Vec3(row[1], row[2], row[3]);
    s.accel = Vec3(row[4], row[5], row[6]);
    ds.imu.push_back(s);
  }
  const CsvTable frames = read_csv(dir / "frames.csv");
  for (const auto& row : frames.rows) {
    sim::Frame fr;
    fr.index = static_cast<int>(row[0]);
    fr.stamp = row[1];
    fr.true_time = row[2];
    fr.td_true = row[3];
    fr.r_wb = Quat(row[4], row[5], row[6], row[7]).normalized().toRotationMatrix();
    fr.p_wb = Vec3(row[8], row[9], row[10]);
    fr.v_w = Vec3(row[11], row[12], row[13]);
    fr.omega_body = Vec3(row[14], row[15], row[16]);
    ds.frames.push_back(fr);
  }
  const CsvTable lms = read_csv(dir / "landmarks.csv");
  for (const auto& row : lms.rows) {
    ds.landmarks.emplace_back(row[1], row[2], row[3]);
  }
  return ds;
}

void write_tracks_csv(const fs::path& path, const fe::TrackTable& tracks) {
  File f(path, "w");
  std::fprintf(f.f, "feature_id,frame,u,v,stamp,class\n");
  for (const auto& track : tracks.tracks) {
    for (const auto& o : track.obs) {
      const auto cls = fe::classify_feature(track, o.frame);
      std::fprintf(f.f, "%d,%d,%s,%s,%s,%s\n", o.feature_id, o.frame,
                   format_g12(o.pixel.x()).c_str(), format_g12(o.pixel.y()).c_str(),
                   format_g12(o.stamp).c_str(), fe::feature_class_name(cls));
    }
  }
}

void write_windows_csv(const fs::path& path, const std::vector<est::WindowReport>& windows) {
  File f(path, "w");
  std::fprintf(f.f,
               "window,frame_first,frame_last,td_est,td_true_mean,iterations,cost_initial,"
               "cost_final,n_wellmatched,n_its,n_f2f,n_fallback,its_loss,f2f_loss,tpn_loss,"
               "divergence_flag,td_frozen,td_pred,vx,vy,vz\n");
  for (const auto& w : windows) {
    std::fprintf(f.f, "%d,%d,%d,%s,%s,%d,%s,%s,%d,%d,%d,%d,%s,%s,%s,%d,%d,%s,%s,%s,%s\n",
                 w.window_index, w.frame_first, w.frame_last, format_g17(w.td_est).c_str(),
                 format_g17(w.td_true_mean).c_str(), w.iterations,
                 format_g17(w.cost_initial).c_str(), format_g17(w.cost_final).c_str(),
                 w.n_wellmatched, w.n_its, w.n_f2f, w.n_fallback,
                 format_g17(w.its_loss).c_str(), format_g17(w.f2f_loss).c_str(),
                 format_g17(w.tpn_loss).c_str(), w.diverged ? 1 : 0, w.td_frozen ? 1 : 0,
                 format_g17(w.td_pred).c_str(), format_g17(w.v_end.x()).c_str(),
                 format_g17(w.v_end.y()).c_str(), format_g17(w.v_end.z()).c_str());
  }
}

std::vector<est::WindowReport> read_windows_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<est::WindowReport> out;
  for (const auto& row : t.rows) {
    est::WindowReport w;
    w.window_index = static_cast<int>(row[0]);
    w.frame_first = static_cast<int>(row[1]);
    w.frame_last = static_cast<int>(row[2]);
    w.td_est = row[3];
    w.td_true_mean = row[4];
    w.iterations = static_cast<int>(row[5]);
    w.cost_initial = row[6];
    w.cost_final = row[7];
    w.n_wellmatched = static_cast<int>(row[8]);
    w.n_its = static_cast<int>(row[9]);
    w.n_f2f = static_cast<int>(row[10]);
    w.n_fallback = static_cast<int>(row[11]);
    w.its_loss = row[12];
    w.f2f_loss = row[13];
    w.tpn_loss = row[14];
    w.diverged = row[15] != 0.0;
    w.td_frozen = row[16] != 0.0;
    w.td_pred = row[17];
    w.v_end = Vec3(row[18], row[19], row[20]);
    out.push_back(w);
  }
  return out;
}

void write_traj_est_csv(const fs::path& path, const std::vector<est::FrameEstimate>& est,
                        const std::vector<Mat3>& r_gt, const std::vector<Vec3>& p_gt) {
  if (est.size() != r_gt.size() || est.size() != p_gt.size())
    throw std::invalid_argument("write_traj_est_csv: length mismatch");
  File f(path, "w");
  std::fprintf(f.f,
               "frame,stamp,qw,qx,qy,qz,px,py,pz,vx,vy,vz,gt_qw,gt_qx,gt_qy,gt_qz,gt_px,gt_py,"
               "gt_pz\n");
  for (std::size_t i = 0; i < est.size(); ++i) {
    const Quat q(est[i].r_wb);
    const Quat qg(r_gt[i]);
    std::fprintf(f.f, "%d,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s\n",
                 est[i].frame, format_g17(est[i].stamp).c_str(), format_g17(q.w()).c_str(),
                 format_g17(q.x()).c_str(), format_g17(q.y()).c_str(),
                 format_g17(q.z()).c_str(), format_g17(est[i].p_wb.x()).c_str(),
                 format_g17(est[i].p_wb.y()).c_str(), format_g17(est[i].p_wb.z()).c_str(),
                 format_g17(est[i].v_w.x()).c_str(), format_g17(est[i].v_w.y()).c_str(),
                 format_g17(est[i].v_w.z()).c_str(), format_g17(qg.w()).c_str(),
                 format_g17(qg.x()).c_str(), format_g17(qg.y()).c_str(),
                 format_g17(qg.z()).c_str(), format_g17(p_gt[i].x()).c_str(),
                 format_g17(p_gt[i].y()).c_str(), format_g17(p_gt[i].z()).c_str());
  }
}

std::vector<TrajRow> read_traj_est_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  std::vector<TrajRow> out;
  for (const auto& row : t.rows) {
    TrajRow r;
    r.frame = static_cast<int>(row[0]);
    r.stamp = row[1];
    r.q_est = Quat(row[2], row[3], row[4], row[5]);
    r.p_est = Vec3(row[6], row[7], row[8]);
    r.v_est = Vec3(row[9], row[10], row[11]);
    r.q_gt = Quat(row[12], row[13], row[14], row[15]);
    r.p_gt = Vec3(row[16], row[17], row[18]);
    out.push_back(r);
  }
  return out;
}

void write_tpe_csv(const fs::path& path, const std::vector<int>& index,
                   const metrics::TpeResult& tpe) {
  File f(path, "w");
  std::fprintf(f.f, "index,tpe_x,tpe_y,tpe_z,tpe_norm\n");
  for (std::size_t i = 0; i < index.size(); ++i) {
    const Vec3& v = tpe.per_index[i];
    std::fprintf(f.f, "%d,%s,%s,%s,%s\n", index[i], format_g17(v.x()).c_str(),
                 format_g17(v.y()).c_str(), format_g17(v.z()).c_str(),
                 format_g17(v.norm()).c_str());
  }
}

void write_ape_csv(const fs::path& path, const std::vector<int>& frames,
                   const metrics::AteResult& ate) {
  File f(path, "w");
  std::fprintf(f.f, "frame,ape_m,are_deg\n");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::fprintf(f.f, "%d,%s,%s\n", frames[i], format_g17(ate.ape[i]).c_str(),
                 format_g17(ate.are[i]).c_str());
  }
}

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("csv: missing column " + name);
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing-input-file: " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      table.header = cells;
      first = false;
      continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::strtod(c.c_str(), nullptr));
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace toncal::io
