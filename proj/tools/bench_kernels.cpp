// Compares the OpenMP kernels against their serial references: landmark
// projection, visual-factor evaluation, and net batch gradients.

#include <cstdio>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "toncal/estimator.hpp"
#include "toncal/nets.hpp"
#include "toncal/parallel.hpp"
#include "toncal/sim.hpp"

namespace {

double now() {
#ifdef _OPENMP
  return omp_get_wtime();
#else
  return static_cast<double>(clock()) / CLOCKS_PER_SEC;
#endif
}

template <class F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int i = 0; i < reps; ++i) {
    const double t0 = now();
    fn();
    best = std::min(best, now() - t0);
  }
  return best;
}

void report(const char* name, double serial, double parallel) {
  std::printf("%-28s serial %8.3f ms   parallel %8.3f ms   speedup %.2fx\n", name,
              serial * 1e3, parallel * 1e3, serial / parallel);
}

}  // namespace

int main() {
  std::printf("threads: %d (openmp %s)\n\n", toncal::max_threads(),
              toncal::openmp_enabled() ? "on" : "off");
  using namespace toncal;

  // Landmark projection.
  {
    sim::SensorRig rig = sim::default_rig();
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    std::vector<Vec3> landmarks;
    for (int i = 0; i < 200000; ++i) landmarks.emplace_back(u(rng), u(rng), u(rng));
    std::vector<std::optional<Vec2>> out_s, out_p;
    const Mat3 r = Mat3::Identity();
    const Vec3 p = Vec3::Zero();
    const double ts =
        time_best_of(5, [&] { sim::project_landmarks(r, p, landmarks, rig, out_s, false); });
    const double tp =
        time_best_of(5, [&] { sim::project_landmarks(r, p, landmarks, rig, out_p, true); });
    report("project_landmarks 200k", ts, tp);
  }

  // Visual factor evaluation.
  {
    sim::SensorRig rig = sim::default_rig();
    est::WindowState state;
    state.frames.resize(10);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& f : state.frames) {
      f.p_wb = Vec3(0.1 * u(rng), 0.1 * u(rng), 0.1 * u(rng));
    }
    for (int i = 0; i < 2000; ++i) {
      state.feature_ids.push_back(i);
      state.anchor_slots.push_back(0);
      state.anchor_pixels.emplace_back(320 + 200 * u(rng), 240 + 150 * u(rng));
      state.anchor_velocities.emplace_back(30 * u(rng), 30 * u(rng));
      state.depths.push_back(6.0 + u(rng));
    }
    std::vector<est::VisualFactor> factors;
    for (int i = 0; i < 20000; ++i) {
      est::VisualFactor f;
      f.feature_slot = i % 2000;
      f.frame_slot = 1 + i % 9;
      f.z = Vec2(320 + 50 * u(rng), 240 + 50 * u(rng));
      f.velocity = Vec2(40 * u(rng), 40 * u(rng));
      factors.push_back(f);
    }
    std::vector<est::VisualEval> ev_s, ev_p;
    const double ts = time_best_of(
        5, [&] { est::eval_visual_factors(state, factors, rig, 0.002, ev_s, false); });
    const double tp = time_best_of(
        5, [&] { est::eval_visual_factors(state, factors, rig, 0.002, ev_p, true); });
    report("visual factors 20k", ts, tp);
  }

  // MLP batch gradient.
  {
    nets::MlpModel mlp = nets::MlpModel::create({3, 5, 5, 2}, 3);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nets::MlpBatch batch;
    for (int i = 0; i < 4000; ++i) {
      nets::Vec x(3), y(2);
      for (int d = 0; d < 3; ++d) x[d] = u(rng);
      for (int d = 0; d < 2; ++d) y[d] = u(rng);
      batch.emplace_back(x, y);
    }
    nets::MlpGrad g;
    const double ts = time_best_of(10, [&] { nets::mlp_batch_gradient(mlp, batch, g, false); });
    const double tp = time_best_of(10, [&] { nets::mlp_batch_gradient(mlp, batch, g, true); });
    report("mlp batch gradient 4k", ts, tp);
  }

  // LSTM batch gradient (BPTT).
  {
    nets::LstmModel lstm = nets::LstmModel::create(2, 2, 2, 4);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    nets::LstmBatch batch;
    for (int s = 0; s < 512; ++s) {
      nets::LstmSequence seq;
      for (int t = 0; t < 8; ++t) {
        nets::Vec x(2), y(2);
        for (int d = 0; d < 2; ++d) x[d] = u(rng);
        for (int d = 0; d < 2; ++d) y[d] = u(rng);
        seq.push_back({x, y});
      }
      batch.push_back(std::move(seq));
    }
    nets::LstmGrad g;
    const double ts = time_best_of(10, [&] { nets::lstm_batch_gradient(lstm, batch, g, false); });
    const double tp = time_best_of(10, [&] { nets::lstm_batch_gradient(lstm, batch, g, true); });
    report("lstm batch gradient 512x8", ts, tp);
  }
  return 0;
}
