#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "toncal/experiment.hpp"

using namespace toncal;
namespace fs = std::filesystem;

namespace {

std::string small_config(const std::string& variant = "ton", double offset_ms = 8.0) {
  std::ostringstream ss;
  ss << R"({
  "version": 1,
  "seed": 1,
  "trajectory": {"profile": "figure8", "scale": 2.0, "rate": 0.5, "duration_s": 6.0},
  "rig": {"pixel_noise_px": 0.5},
  "offset": {"initial_ms": )"
     << offset_ms << R"(},
  "landmarks": {"count": 300},
  "dropout": {"base_survival": 0.97, "inject_per_frame": 6, "initial_inject": 50},
  "pipeline": {"variant": ")"
     << variant << R"(", "window": 10, "stride": 5, "max_features": 40},
  "train": {"its": {"epochs": 80}, "f2f": {"epochs": 100}, "tpn": {"epochs": 100}}
})";
  return ss.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing reports missing fields by name") {
  CHECK_THROWS_WITH_AS(parse_experiment_config("{}"),
                       doctest::Contains("version"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(parse_experiment_config(R"({"version":1,"seed":1})"),
                       doctest::Contains("trajectory"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      parse_experiment_config(
          R"({"version":1,"seed":1,"trajectory":{"profile":"circle"},"offset":{},"pipeline":{"variant":"ton"}})"),
      doctest::Contains("offset.initial_ms"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config("not json"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config(small_config("warp-drive")), std::invalid_argument);
}

TEST_CASE("config round trip preserves the experiment") {
  const auto cfg = parse_experiment_config(small_config());
  const auto cfg2 = parse_experiment_config(experiment_config_to_json(cfg));
  CHECK(cfg2.sim.offset.initial == cfg.sim.offset.initial);
  CHECK(cfg2.pipeline.window == cfg.pipeline.window);
  CHECK(cfg2.pipeline.its_train.max_epochs == cfg.pipeline.its_train.max_epochs);
  CHECK(cfg2.cit.eps1 == cfg.cit.eps1);
}

TEST_CASE("simulate is idempotent for a fixed seed") {
  const auto cfg = parse_experiment_config(small_config());
  TempDir a("toncal_test_sim_a"), b("toncal_test_sim_b");
  cmd_simulate(cfg, a.path);
  cmd_simulate(cfg, b.path);
  for (const char* name : {"meta.json", "imu.csv", "frames.csv", "landmarks.csv"}) {
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }
}

TEST_CASE("simulate surfaces frame-reordering as an error") {
  auto cfg = parse_experiment_config(small_config());
  cfg.sim.offset.bias_per_frame = 0.030;
  TempDir d("toncal_test_sim_reorder");
  CHECK_THROWS_WITH_AS(cmd_simulate(cfg, d.path), doctest::Contains("frame-reordering"),
                       std::runtime_error);
}

TEST_CASE("dataset directory round trip feeds run") {
  const auto cfg = parse_experiment_config(small_config());
  TempDir d("toncal_test_ds");
  cmd_simulate(cfg, d.path / "ds");
  const auto ds = io::load_dataset(d.path / "ds");
  CHECK(ds.frames.size() == 121);  // 6 s at 20 Hz, inclusive
  CHECK(ds.landmarks.size() == 300);
  CHECK(ds.config.offset.initial == doctest::Approx(8e-3).epsilon(1e-12));
}

TEST_CASE("run writes the full artifact set and is deterministic") {
  auto cfg = parse_experiment_config(small_config());
  cfg.export_tracks = true;
  TempDir a("toncal_test_run_a"), b("toncal_test_run_b");
  const auto sa = cmd_run(cfg, a.path);
  const auto sb = cmd_run(cfg, b.path);
  for (const char* name :
       {"windows.csv", "traj_est.csv", "tpe.csv", "ape.csv", "metrics.json", "tracks.csv"}) {
    CHECK(slurp(a.path / name) == slurp(b.path / name));
  }
  CHECK(sa.n_windows == sb.n_windows);
  CHECK(sa.tpe_rmse == sb.tpe_rmse);
  REQUIRE(sa.cit.has_value());
}

TEST_CASE("windows csv round trips exactly at 17 significant digits") {
  auto cfg = parse_experiment_config(small_config());
  TempDir d("toncal_test_windows");
  cmd_run(cfg, d.path);
  const auto rows = io::read_windows_csv(d.path / "windows.csv");
  io::write_windows_csv(d.path / "windows2.csv", rows);
  CHECK(slurp(d.path / "windows.csv") == slurp(d.path / "windows2.csv"));
}

TEST_CASE("variant contracts visible in run artifacts") {
  TempDir d("toncal_test_variants");
  auto ton_cfg = parse_experiment_config(small_config("ton"));
  auto sir_cfg = parse_experiment_config(small_config("sir"));
  auto tpn_cfg = parse_experiment_config(small_config("tpn-only"));
  cmd_run(ton_cfg, d.path / "ton");
  cmd_run(sir_cfg, d.path / "sir");
  cmd_run(tpn_cfg, d.path / "tpn");
  const auto ton_rows = io::read_windows_csv(d.path / "ton" / "windows.csv");
  const auto sir_rows = io::read_windows_csv(d.path / "sir" / "windows.csv");
  const auto tpn_rows = io::read_windows_csv(d.path / "tpn" / "windows.csv");
  CHECK(ton_rows.size() == sir_rows.size());
  int its = 0, f2f = 0;
  for (const auto& w : tpn_rows) {
    its += w.n_its;
    f2f += w.n_f2f;
  }
  CHECK(its == 0);
  CHECK(f2f == 0);
}

TEST_CASE("ekf variant runs and tracks the offset") {
  auto cfg = parse_experiment_config(small_config("ekf"));
  TempDir d("toncal_test_ekf");
  const auto s = cmd_run(cfg, d.path);
  const auto rows = io::read_windows_csv(d.path / "windows.csv");
  REQUIRE(!rows.empty());
  CHECK(std::abs(rows.back().td_est - 8e-3) < 2e-3);
  (void)s;
}

TEST_CASE("sweep writes one row per cell and reruns identically") {
  auto cfg = parse_experiment_config(small_config());
  TempDir a("toncal_test_sweep_a"), b("toncal_test_sweep_b");
  const auto cells = cmd_sweep(cfg, {-8.0, 8.0}, {1}, a.path, 2);
  CHECK(cells.size() == 4);  // 2 offsets x 1 seed x {ton, sir}
  for (const auto& c : cells) CHECK(c.error.empty());
  cmd_sweep(cfg, {-8.0, 8.0}, {1}, b.path, 1);
  CHECK(slurp(a.path / "summary.csv") == slurp(b.path / "summary.csv"));
}

TEST_CASE("sweep records per-cell failures without aborting") {
  auto cfg = parse_experiment_config(small_config());
  cfg.dataset_dir = "/nonexistent/toncal_missing_dataset";
  TempDir d("toncal_test_sweep_fail");
  const auto cells = cmd_sweep(cfg, {8.0}, {1, 2}, d.path, 2);
  CHECK(cells.size() == 4);
  for (const auto& c : cells) CHECK_FALSE(c.error.empty());
  CHECK(fs::exists(d.path / "summary.csv"));
}

TEST_CASE("plotdata derives the four csv files") {
  auto cfg = parse_experiment_config(small_config());
  TempDir d("toncal_test_plot");
  cmd_run(cfg, d.path);
  cmd_plotdata(d.path);
  const auto windows = io::read_csv(d.path / "windows.csv");
  const auto td_err = io::read_csv(d.path / "td_error_vs_time.csv");
  CHECK(td_err.rows.size() == windows.rows.size());
  const auto traj = io::read_csv(d.path / "traj_est.csv");
  const auto xy = io::read_csv(d.path / "traj_xy.csv");
  CHECK(xy.rows.size() == traj.rows.size());
  const auto ape = io::read_csv(d.path / "ape_vs_time.csv");
  CHECK(ape.rows.size() == traj.rows.size());
  const auto tpe = io::read_csv(d.path / "tpe_vs_time.csv");
  CHECK(tpe.rows.size() == windows.rows.size());

  TempDir empty("toncal_test_plot_empty");
  CHECK_THROWS_WITH_AS(cmd_plotdata(empty.path), doctest::Contains("missing-input-file"),
                       std::runtime_error);
}

TEST_CASE("grad check suite is tight") {
  const auto rep = grad_check_report();
  CHECK(rep.mlp < 1e-4);
  CHECK(rep.its_lstm < 1e-4);
  CHECK(rep.tpn_lstm < 1e-4);
  CHECK(rep.visual < 1e-4);
  CHECK(rep.imu < 1e-4);
}
