#include "toncal/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Cholesky>

#include "toncal/parallel.hpp"
#include "toncal/so3.hpp"

namespace toncal::est {

const char* velocity_source_name(VelocitySource s) {
  switch (s) {
    case VelocitySource::kConstantSpeed: return "constant-speed";
    case VelocitySource::kItsFvon: return "its-fvon";
    case VelocitySource::kF2fFvon: return "f2f-fvon";
    case VelocitySource::kZeroFallback: return "zero-fallback";
  }
  return "unknown";
}

Vec2 shift_observation(const Vec2& z, const Vec2& velocity, double td) {
  return z - velocity * td;
}

Vec3 backproject(const Vec2& pixel, const SensorRig& rig) {
  return Vec3((pixel.x() - rig.cx) / rig.fx, (pixel.y() - rig.cy) / rig.fy, 1.0);
}

Vec3 WindowState::feature_world_point(int feature_slot, const SensorRig& rig,
                                      double anchor_td) const {
  const int a = anchor_slots[feature_slot];
  const Vec3 b = backproject(
      shift_observation(anchor_pixels[feature_slot], anchor_velocities[feature_slot], anchor_td),
      rig);
  const Vec3 y = rig.r_cb.transpose() * (depths[feature_slot] * b - rig.p_cb);
  return frames[a].r_wb * y + frames[a].p_wb;
}

VisualEval eval_visual_factor(const WindowState& state, const VisualFactor& factor,
                              const SensorRig& rig, double anchor_td) {
  VisualEval ev;
  const FrameState& fj = state.frames[factor.frame_slot];
  const int a = state.anchor_slots[factor.feature_slot];
  const FrameState& fa = state.frames[a];

  const Vec3 b = backproject(shift_observation(state.anchor_pixels[factor.feature_slot],
                                               state.anchor_velocities[factor.feature_slot],
                                               anchor_td),
                             rig);
  const Vec3 y = rig.r_cb.transpose() * (state.depths[factor.feature_slot] * b - rig.p_cb);
  const Vec3 w = fa.r_wb * y + fa.p_wb;
  const Vec3 xb = fj.r_wb.transpose() * (w - fj.p_wb);
  const Vec3 xc = rig.r_cb * xb + rig.p_cb;
  if (xc.z() <= rig.near_plane) {
    ev.active = false;
    ev.j_theta.setZero();
    ev.j_p.setZero();
    ev.j_anchor_theta.setZero();
    ev.j_anchor_p.setZero();
    return ev;
  }
  const Vec2 pi(rig.fx * xc.x() / xc.z() + rig.cx, rig.fy * xc.y() / xc.z() + rig.cy);
  const bool fallback = factor.source == VelocitySource::kZeroFallback;
  const Vec2 v = fallback ? Vec2::Zero().eval() : factor.velocity;
  ev.residual = shift_observation(factor.z, v, state.td) - pi;

  const auto dpi = sim::projection_jacobian(xc, rig);
  const Eigen::Matrix<double, 2, 3> dpi_dw = dpi * rig.r_cb * fj.r_wb.transpose();
  ev.j_p = dpi_dw;                                    // -d r/d p_j = +dpi_dw (r has -pi)
  ev.j_theta = -dpi * rig.r_cb * so3::hat(xb);
  ev.j_anchor_p = -dpi_dw;
  ev.j_anchor_theta = dpi_dw * fa.r_wb * so3::hat(y);
  ev.j_depth = -dpi_dw * fa.r_wb * rig.r_cb.transpose() * b;
  ev.j_td = fallback ? Vec2::Zero().eval() : Vec2(-factor.velocity);
  return ev;
}

void eval_visual_factors(const WindowState& state, const std::vector<VisualFactor>& factors,
                         const SensorRig& rig, double anchor_td, std::vector<VisualEval>& out,
                         bool parallel) {
  out.resize(factors.size());
  auto kernel = [&](std::size_t i) {
    out[i] = eval_visual_factor(state, factors[i], rig, anchor_td);
  };
  if (parallel) {
    parallel_for(static_cast<std::ptrdiff_t>(factors.size()), kernel);
  } else {
    serial_for(static_cast<std::ptrdiff_t>(factors.size()), kernel);
  }
}

ImuFactor preintegrate_imu(std::span<const ImuSample> samples, double t0, double t1,
                           const ImuNoise& noise) {
  if (t1 < t0) throw std::invalid_argument("preintegrate_imu: t1 < t0");
  // Collect samples in [t0, t1], synthesizing boundary samples by linear
  // interpolation when the interval does not start/end on a sample.
  std::vector<ImuSample> seg;
  auto interp = [&](double t) -> ImuSample {
    for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
      if (samples[i].t <= t && t <= samples[i + 1].t) {
        const double a = (t - samples[i].t) / (samples[i + 1].t - samples[i].t);
        ImuSample s;
        s.t = t;
        s.omega = (1 - a) * samples[i].omega + a * samples[i + 1].omega;
        s.accel = (1 - a) * samples[i].accel + a * samples[i + 1].accel;
        return s;
      }
    }
    throw std::invalid_argument("preintegrate_imu: time outside sample span");
  };
  for (const auto& s : samples) {
    if (s.t >= t0 && s.t <= t1) seg.push_back(s);
  }
  if (seg.empty()) throw std::invalid_argument("preintegrate_imu: empty interval");
  if (seg.front().t > t0) seg.insert(seg.begin(), interp(t0));
  if (seg.back().t < t1) seg.push_back(interp(t1));

  ImuFactor f;
  f.dt = t1 - t0;
  Eigen::Matrix<double, 9, 9> p = Eigen::Matrix<double, 9, 9>::Zero();
  int steps = 0;
  for (std::size_t i = 0; i + 1 < seg.size(); ++i) {
    const double dt = seg[i + 1].t - seg[i].t;
    if (dt <= 0.0) continue;
    ++steps;
    const Vec3 w_mid = 0.5 * (seg[i].omega + seg[i + 1].omega);
    const Mat3 r_next = f.delta_r * so3::exp(w_mid * dt);
    const Vec3 a_mid = 0.5 * (f.delta_r * seg[i].accel + r_next * seg[i + 1].accel);

    // First-order covariance propagation, state [dtheta, dv, dp].
    Eigen::Matrix<double, 9, 9> fmat = Eigen::Matrix<double, 9, 9>::Identity();
    const Vec3 a_avg = 0.5 * (seg[i].accel + seg[i + 1].accel);
    fmat.block<3, 3>(0, 0) -= so3::hat(w_mid) * dt;
    fmat.block<3, 3>(3, 0) = -f.delta_r * so3::hat(a_avg) * dt;
    fmat.block<3, 3>(6, 3) = Mat3::Identity() * dt;
    p = fmat * p * fmat.transpose();
    p.block<3, 3>(0, 0) += Mat3::Identity() * noise.gyro_sigma * noise.gyro_sigma * dt * dt;
    p.block<3, 3>(3, 3) += Mat3::Identity() * noise.accel_sigma * noise.accel_sigma * dt * dt;

    f.delta_p += f.delta_v * dt + 0.5 * a_mid * dt * dt;
    f.delta_v += a_mid * dt;
    f.delta_r = r_next;
  }
  if (steps == 0) {
    // Zero-time interval: identity preintegration, zero covariance.
    f.covariance.setZero();
    f.sqrt_info.setIdentity();
    return f;
  }
  p.block<3, 3>(0, 0) += Mat3::Identity() * noise.theta_floor;
  p.block<3, 3>(3, 3) += Mat3::Identity() * noise.vel_floor;
  p.block<3, 3>(6, 6) += Mat3::Identity() * noise.pos_floor;
  f.covariance = p;
  // sqrt information via Cholesky of P^-1 = L L^T -> weight rows by L^T.
  const Eigen::Matrix<double, 9, 9> info = p.inverse();
  Eigen::LLT<Eigen::Matrix<double, 9, 9>> llt(0.5 * (info + info.transpose()));
  f.sqrt_info = llt.matrixU();
  return f;
}

ImuEval eval_imu_factor(const FrameState& fi, const FrameState& fj, const ImuFactor& factor,
                        const Vec3& gravity) {
  ImuEval ev;
  const double dt = factor.dt;
  const Mat3 rit = fi.r_wb.transpose();
  const Mat3 err_r = factor.delta_r.transpose() * rit * fj.r_wb;
  const Vec3 phi = so3::log(err_r);
  const Vec3 dv = fj.v_w - fi.v_w - gravity * dt;
  const Vec3 dp = fj.p_wb - fi.p_wb - fi.v_w * dt - 0.5 * gravity * dt * dt;

  ev.residual.segment<3>(0) = phi;
  ev.residual.segment<3>(3) = rit * dv - factor.delta_v;
  ev.residual.segment<3>(6) = rit * dp - factor.delta_p;

  const Mat3 jr_inv = so3::right_jacobian_inv(phi);
  ev.j_i.setZero();
  ev.j_j.setZero();
  // columns: [dtheta, dp, dv]
  ev.j_i.block<3, 3>(0, 0) = -jr_inv * fj.r_wb.transpose() * fi.r_wb;
  ev.j_i.block<3, 3>(3, 0) = so3::hat(rit * dv);
  ev.j_i.block<3, 3>(3, 6) = -rit;
  ev.j_i.block<3, 3>(6, 0) = so3::hat(rit * dp);
  ev.j_i.block<3, 3>(6, 3) = -rit;
  ev.j_i.block<3, 3>(6, 6) = -rit * dt;

  ev.j_j.block<3, 3>(0, 0) = jr_inv;
  ev.j_j.block<3, 3>(3, 6) = rit;
  ev.j_j.block<3, 3>(6, 3) = rit;
  return ev;
}

FrameState propagate_state(const FrameState& from, const ImuFactor& factor, const Vec3& gravity) {
  FrameState out;
  const double dt = factor.dt;
  out.r_wb = so3::orthonormalize(from.r_wb * factor.delta_r);
  out.v_w = from.v_w + gravity * dt + from.r_wb * factor.delta_v;
  out.p_wb = from.p_wb + from.v_w * dt + 0.5 * gravity * dt * dt + from.r_wb * factor.delta_p;
  return out;
}

namespace {

struct Layout {
  int n_frames = 0;
  int n_features = 0;
  bool solve_td = true;
  // v0 free at columns 0..2; frame i>=1 at 3+(i-1)*9 as [dtheta, dp, dv];
  // one depth per feature after the frames; td last.
  int frame_base(int i) const { return 3 + (i - 1) * 9; }
  int depth_col(int f) const { return 3 + (n_frames - 1) * 9 + f; }
  int td_col() const { return 3 + (n_frames - 1) * 9 + n_features; }
  int dim() const { return td_col() + (solve_td ? 1 : 0); }
};

double window_cost(const WindowState& state, const std::vector<VisualFactor>& visual,
                   const std::vector<ImuFactor>& imu, const std::optional<TdPriorFactor>& prior,
                   const SensorRig& rig, const SolverConfig& cfg, double anchor_td,
                   std::vector<VisualEval>& scratch, int* inactive = nullptr) {
  eval_visual_factors(state, visual, rig, anchor_td, scratch, cfg.parallel);
  double cost = 0.0;
  int off = 0;
  const double wpix = 1.0 / cfg.pixel_sigma;
  for (const auto& ev : scratch) {
    if (!ev.active) {
      ++off;
      continue;
    }
    cost += (wpix * ev.residual).squaredNorm();
  }
  for (const auto& fac : imu) {
    const ImuEval ev = eval_imu_factor(state.frames[fac.frame_slot],
                                       state.frames[fac.frame_slot + 1], fac, rig.gravity);
    cost += (fac.sqrt_info * ev.residual).squaredNorm();
  }
  if (prior) {
    const double r = (state.td - prior->td_pred) / std::sqrt(prior->variance);
    cost += r * r;
  }
  if (inactive != nullptr) *inactive = off;
  return cost;
}

void apply_step(WindowState& state, const Eigen::VectorXd& dx, const Layout& lay,
                const SolverConfig& cfg, bool* clamped) {
  state.frames[0].v_w += dx.segment<3>(0);
  for (int i = 1; i < lay.n_frames; ++i) {
    const int b = lay.frame_base(i);
    FrameState& f = state.frames[i];
    f.r_wb = so3::orthonormalize(f.r_wb * so3::exp(dx.segment<3>(b)));
    f.p_wb += dx.segment<3>(b + 3);
    f.v_w += dx.segment<3>(b + 6);
  }
  for (int f = 0; f < lay.n_features; ++f) {
    state.depths[f] = std::max(cfg.min_depth, state.depths[f] + dx[lay.depth_col(f)]);
  }
  if (lay.solve_td) {
    state.td += dx[lay.td_col()];
    const double bound = cfg.td_clamp;
    if (state.td > bound || state.td < -bound) {
      state.td = std::clamp(state.td, -bound, bound);
      if (clamped != nullptr) *clamped = true;
    }
  }
}

// One damped Gauss-Newton run at a fixed anchor linearization offset.
SolveReport solve_pass(WindowState& state, const std::vector<VisualFactor>& visual,
                       const std::vector<ImuFactor>& imu,
                       const std::optional<TdPriorFactor>& prior, const SensorRig& rig,
                       const SolverConfig& cfg, double anchor_td) {
  SolveReport report;
  std::vector<VisualEval> evals;
  int inactive = 0;
  double cost = window_cost(state, visual, imu, prior, rig, cfg, anchor_td, evals, &inactive);
  if (static_cast<int>(visual.size()) - inactive < cfg.min_visual_factors) {
    throw std::invalid_argument("solve_window: insufficient active visual factors");
  }
  report.initial_cost = cost;
  report.cost_trace.push_back(cost);

  Layout lay;
  lay.n_frames = static_cast<int>(state.frames.size());
  lay.n_features = static_cast<int>(state.depths.size());
  lay.solve_td = true;

  const double wpix = 1.0 / cfg.pixel_sigma;

  // Observability guard: all-zero velocity Jacobians leave td unconstrained.
  {
    double td_info = 0.0;
    for (std::size_t i = 0; i < visual.size(); ++i) {
      if (!evals[i].active) continue;
      td_info += (wpix * evals[i].j_td).squaredNorm();
    }
    if (td_info < cfg.td_freeze_info) {
      lay.solve_td = false;
      report.td_frozen = true;
    }
  }

  if (cost < 1e-18) {  // already at a fixed point, up to accumulation noise
    report.final_cost = cost;
    return report;
  }

  double lambda = cfg.init_lambda;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    eval_visual_factors(state, visual, rig, anchor_td, evals, cfg.parallel);

    const int dim = lay.dim();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);

    auto add_block = [&](const Eigen::Ref<const Eigen::MatrixXd>& ja, int ca,
                         const Eigen::Ref<const Eigen::MatrixXd>& jb, int cb) {
      h.block(ca, cb, ja.cols(), jb.cols()) += ja.transpose() * jb;
    };

    for (std::size_t i = 0; i < visual.size(); ++i) {
      const VisualEval& ev = evals[i];
      if (!ev.active) {
        ++report.deactivated;
        continue;
      }
      const int fs = visual[i].frame_slot;
      const int ps = visual[i].feature_slot;
      const int as = state.anchor_slots[ps];
      const Vec2 r = wpix * ev.residual;
      // Block columns present for this factor.
      std::vector<std::pair<Eigen::MatrixXd, int>> blocks;
      if (fs > 0) {
        blocks.emplace_back(wpix * ev.j_theta, lay.frame_base(fs));
        blocks.emplace_back(wpix * ev.j_p, lay.frame_base(fs) + 3);
      }
      if (as > 0) {
        blocks.emplace_back(wpix * ev.j_anchor_theta, lay.frame_base(as));
        blocks.emplace_back(wpix * ev.j_anchor_p, lay.frame_base(as) + 3);
      }
      blocks.emplace_back(wpix * Eigen::MatrixXd(ev.j_depth), lay.depth_col(ps));
      if (lay.solve_td) {
        blocks.emplace_back(wpix * Eigen::MatrixXd(ev.j_td), lay.td_col());
      }
      for (const auto& [ja, ca] : blocks) {
        g.segment(ca, ja.cols()) += ja.transpose() * r;
        for (const auto& [jb, cb] : blocks) add_block(ja, ca, jb, cb);
      }
    }

    for (const auto& fac : imu) {
      const ImuEval ev = eval_imu_factor(state.frames[fac.frame_slot],
                                         state.frames[fac.frame_slot + 1], fac, rig.gravity);
      const Eigen::Matrix<double, 9, 1> r = fac.sqrt_info * ev.residual;
      const Eigen::Matrix<double, 9, 9> ji = fac.sqrt_info * ev.j_i;
      const Eigen::Matrix<double, 9, 9> jj = fac.sqrt_info * ev.j_j;
      const int i = fac.frame_slot;
      std::vector<std::pair<Eigen::MatrixXd, int>> blocks;
      // Frame i: gauge-fixed pose for frame 0, velocity always free.
      if (i > 0) {
        blocks.emplace_back(ji.leftCols<6>(), lay.frame_base(i));
        blocks.emplace_back(ji.rightCols<3>(), lay.frame_base(i) + 6);
      } else {
        blocks.emplace_back(ji.rightCols<3>(), 0);
      }
      blocks.emplace_back(jj.leftCols<6>(), lay.frame_base(i + 1));
      blocks.emplace_back(jj.rightCols<3>(), lay.frame_base(i + 1) + 6);
      for (const auto& [ja, ca] : blocks) {
        g.segment(ca, ja.cols()) += ja.transpose() * r;
        for (const auto& [jb, cb] : blocks) add_block(ja, ca, jb, cb);
      }
    }

    if (prior && lay.solve_td) {
      const double w = 1.0 / std::sqrt(prior->variance);
      const double r = w * (state.td - prior->td_pred);
      g[lay.td_col()] += w * r;
      h(lay.td_col(), lay.td_col()) += w * w;
    }

    // Damped step with retry on cost increase.
    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd hd = h;
      for (int d = 0; d < dim; ++d) {
        hd(d, d) += lambda * std::max(h(d, d), 1e-9);
      }
      const Eigen::VectorXd dx = hd.ldlt().solve(-g);
      WindowState candidate = state;
      bool clamped = false;
      apply_step(candidate, dx, lay, cfg, &clamped);
      std::vector<VisualEval> scratch;
      const double new_cost =
          window_cost(candidate, visual, imu, prior, rig, cfg, anchor_td, scratch);
      if (new_cost < cost) {
        state = std::move(candidate);
        report.td_clamped = report.td_clamped || clamped;
        const double drop = (cost - new_cost) / std::max(cost, 1e-300);
        cost = new_cost;
        report.cost_trace.push_back(cost);
        lambda = std::max(lambda * cfg.lambda_down, 1e-12);
        accepted = true;
        report.iterations = iter + 1;
        if (drop < cfg.rel_cost_tol) {
          report.final_cost = cost;
          return report;
        }
      } else if ((new_cost - cost) / std::max(cost, 1e-300) < cfg.rel_cost_tol) {
        // Numerically stuck at the optimum; converged without moving.
        report.final_cost = cost;
        return report;
      } else {
        lambda *= cfg.lambda_up;
        if (lambda > cfg.max_lambda) {
          report.diverged = true;
          report.final_cost = cost;
          return report;
        }
      }
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace

SolveReport solve_window(WindowState& state, const std::vector<VisualFactor>& visual,
                         const std::vector<ImuFactor>& imu,
                         const std::optional<TdPriorFactor>& prior, const SensorRig& rig,
                         const SolverConfig& cfg) {
  if (state.frames.size() < 2) throw std::invalid_argument("solve_window: need >= 2 frames");
  if (state.depths.size() != state.anchor_slots.size() ||
      state.depths.size() != state.anchor_pixels.size() ||
      state.depths.size() != state.anchor_velocities.size()) {
    throw std::invalid_argument("solve_window: inconsistent feature arrays");
  }

  // Re-linearize the anchor shift at the latest offset until self-consistent.
  // The outer map td -> argmin is a near-affine contraction whose rate
  // approaches 1 under gentle motion, so accelerate it with Aitken's delta
  // squared on the iterate sequence.
  SolveReport report;
  std::vector<double> seq{state.td};
  for (int pass = 0; pass < cfg.max_outer_passes; ++pass) {
    const double anchor_td = state.td;
    SolveReport pr = solve_pass(state, visual, imu, prior, rig, cfg, anchor_td);
    if (pass == 0) {
      report = pr;
    } else {
      report.iterations += pr.iterations;
      report.cost_trace.insert(report.cost_trace.end(), pr.cost_trace.begin(),
                               pr.cost_trace.end());
      report.final_cost = pr.final_cost;
      report.diverged = pr.diverged;
      report.td_frozen = pr.td_frozen;
      report.td_clamped = report.td_clamped || pr.td_clamped;
      report.deactivated += pr.deactivated;
    }
    if (pr.td_frozen || pr.diverged) break;
    if (std::abs(state.td - anchor_td) < cfg.outer_td_tol) break;
    seq.push_back(state.td);
    if (seq.size() >= 3) {
      const double d1 = seq[seq.size() - 2] - seq[seq.size() - 3];
      const double d2 = seq[seq.size() - 1] - seq[seq.size() - 2];
      if (std::abs(d2) < std::abs(d1) && std::abs(d1) > 1e-15) {
        // Contraction rate capped so a near-unit ratio cannot fling the
        // iterate; later passes clean up any remaining gap.
        double rho = d2 / d1;
        rho = std::clamp(rho, -0.9, 0.98);
        const double extra = d2 * rho / (1.0 - rho);
        const double accel = seq.back() + extra;
        if (std::isfinite(accel)) {
          state.td = std::clamp(accel, -cfg.td_clamp, cfg.td_clamp);
          seq.assign(1, state.td);
        }
      }
    }
  }
  return report;
}

TdPropagation ekf_propagate_td(double td_prev, double td_pred, double dt, double prior_var,
                               double process_noise) {
  if (dt <= 0.0) throw std::invalid_argument("ekf_propagate_td: dt must be > 0");
  TdPropagation out;
  out.jacobian = (td_pred - td_prev) / dt;
  out.mean = td_prev + out.jacobian * dt;  // lands on td_pred
  out.variance = prior_var + process_noise;
  return out;
}

TdPosterior ekf_update_td(const TdPropagation& prop, double measurement, double meas_var) {
  const double s = prop.variance + meas_var;
  const double k = prop.variance / s;
  TdPosterior post;
  post.mean = prop.mean + k * (measurement - prop.mean);
  post.variance = (1.0 - k) * prop.variance;
  return post;
}

}  // namespace toncal::est
