#include "toncal/nets.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <type_traits>

#include <nlohmann/json.hpp>

#include "toncal/parallel.hpp"

namespace toncal::nets {

namespace {

using Json = nlohmann::json;

// Tiny batches fall back to serial; slot reduction keeps either path bitwise
// equal, this is only an overhead cutoff.
constexpr std::size_t kParallelCutoff = 16;

Mat init_matrix(int rows, int cols, int fan_in, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = u(rng) * scale;
  }
  return m;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

// ---------------------------------------------------------------------------
// MLP

MlpModel MlpModel::create(const std::vector<int>& sizes, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output layer");
  MlpModel m;
  m.sizes = sizes;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    m.w.push_back(init_matrix(sizes[l + 1], sizes[l], sizes[l], rng));
    m.b.push_back(Vec::Zero(sizes[l + 1]));
  }
  return m;
}

Vec MlpModel::forward(const Vec& x) const {
  if (x.size() != sizes.front())
    throw std::invalid_argument("mlp forward: input dimension mismatch");
  Vec a = x;
  for (std::size_t l = 0; l < w.size(); ++l) {
    Vec z = w[l] * a + b[l];
    a = (l + 1 < w.size()) ? z.array().tanh().matrix() : z;
  }
  return a;
}

int MlpModel::parameter_count() const {
  int n = 0;
  for (std::size_t l = 0; l < w.size(); ++l)
    n += static_cast<int>(w[l].size() + b[l].size());
  return n;
}

MlpGrad MlpGrad::zeros_like(const MlpModel& m) {
  MlpGrad g;
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    g.dw.push_back(Mat::Zero(m.w[l].rows(), m.w[l].cols()));
    g.db.push_back(Vec::Zero(m.b[l].size()));
  }
  return g;
}

void MlpGrad::set_zero() {
  for (auto& m : dw) m.setZero();
  for (auto& v : db) v.setZero();
}

void MlpGrad::add(const MlpGrad& other, double scale) {
  for (std::size_t l = 0; l < dw.size(); ++l) {
    dw[l] += scale * other.dw[l];
    db[l] += scale * other.db[l];
  }
}

namespace {

// Per-sample squared-error gradient; returns ||yhat - y||^2.
double mlp_sample_gradient(const MlpModel& model, const Vec& x, const Vec& y, MlpGrad& g) {
  const std::size_t layers = model.w.size();
  std::vector<Vec> act(layers + 1);
  act[0] = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Vec z = model.w[l] * act[l] + model.b[l];
    act[l + 1] = (l + 1 < layers) ? z.array().tanh().matrix() : z;
  }
  const double err = (act[layers] - y).squaredNorm();
  Vec delta = 2.0 * (act[layers] - y);
  for (std::size_t l = layers; l-- > 0;) {
    g.dw[l] = delta * act[l].transpose();
    g.db[l] = delta;
    if (l > 0) {
      delta = model.w[l].transpose() * delta;
      delta.array() *= 1.0 - act[l].array().square();
    }
  }
  return err;
}

}  // namespace

double mlp_loss(const MlpModel& model, const MlpBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("mlp_loss: empty batch");
  double sum = 0.0;
  for (const auto& [x, y] : batch) sum += (model.forward(x) - y).squaredNorm();
  return sum / static_cast<double>(batch.size());
}

double mlp_batch_gradient(const MlpModel& model, const MlpBatch& batch, MlpGrad& grad,
                          bool parallel) {
  if (batch.empty()) throw std::invalid_argument("mlp_batch_gradient: empty batch");
  const std::size_t n = batch.size();
  std::vector<MlpGrad> slots(n, MlpGrad::zeros_like(model));
  std::vector<double> errs(n, 0.0);
  auto kernel = [&](std::size_t i) {
    errs[i] = mlp_sample_gradient(model, batch[i].first, batch[i].second, slots[i]);
  };
  if (parallel && n >= kParallelCutoff) {
    parallel_for(static_cast<std::ptrdiff_t>(n), kernel);
  } else {
    serial_for(static_cast<std::ptrdiff_t>(n), kernel);
  }
  grad = MlpGrad::zeros_like(model);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) grad.add(slots[i], inv_n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += errs[i];
  return sum * inv_n;
}

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

// In-place parameter update; m/v carry the Adam moments for the whole
// training call (reset between calls).
void apply_update(Eigen::Ref<Mat> theta, const Eigen::Ref<const Mat>& grad, Mat& m, Mat& v,
                  int t, const TrainConfig& cfg) {
  if (cfg.optimizer == Optimizer::kGd) {
    theta -= cfg.learning_rate * grad;
    return;
  }
  m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
  v = kAdamBeta2 * v.array().matrix() + (1.0 - kAdamBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  theta -= (cfg.learning_rate * (m / c1).array() / ((v / c2).array().sqrt() + kAdamEps))
               .matrix();
}

}  // namespace

TrainResult train_mlp(MlpModel& model, const MlpBatch& batch, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("train_mlp: empty label set");
  MlpGrad grad;
  std::vector<Mat> mw, vw, mb, vb;
  for (std::size_t l = 0; l < model.w.size(); ++l) {
    mw.push_back(Mat::Zero(model.w[l].rows(), model.w[l].cols()));
    vw.push_back(Mat::Zero(model.w[l].rows(), model.w[l].cols()));
    mb.push_back(Mat::Zero(model.b[l].size(), 1));
    vb.push_back(Mat::Zero(model.b[l].size(), 1));
  }
  double loss = 0.0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    loss = mlp_batch_gradient(model, batch, grad, cfg.parallel);
    if (cfg.stop_loss > 0.0 && loss < cfg.stop_loss) return {loss, epoch};
    for (std::size_t l = 0; l < model.w.size(); ++l) {
      apply_update(model.w[l], grad.dw[l], mw[l], vw[l], epoch + 1, cfg);
      Mat b = model.b[l];
      apply_update(b, Mat(grad.db[l]), mb[l], vb[l], epoch + 1, cfg);
      model.b[l] = b;
    }
  }
  return {mlp_loss(model, batch), epoch};
}

// ---------------------------------------------------------------------------
// LSTM

LstmModel LstmModel::create(int in, int hidden, int out, std::uint64_t seed) {
  if (in <= 0 || hidden <= 0 || out <= 0)
    throw std::invalid_argument("lstm: sizes must be positive");
  LstmModel m;
  m.in = in;
  m.hidden = hidden;
  m.out = out;
  m.seed = seed;
  std::mt19937_64 rng(seed);
  m.w_gates = init_matrix(4 * hidden, in + hidden, in + hidden, rng);
  m.b_gates = Vec::Zero(4 * hidden);
  m.w_out = init_matrix(out, hidden, hidden, rng);
  m.b_out = Vec::Zero(out);
  return m;
}

int LstmModel::parameter_count() const {
  return static_cast<int>(w_gates.size() + b_gates.size() + w_out.size() + b_out.size());
}

namespace {

struct LstmTrace {
  std::vector<Vec> zcat, gi, gf, gg, go, c, tc, h, y;
};

void lstm_run(const LstmModel& m, const std::vector<Vec>& inputs, LstmTrace& tr) {
  const int h = m.hidden;
  const std::size_t T = inputs.size();
  tr.zcat.resize(T);
  tr.gi.resize(T);
  tr.gf.resize(T);
  tr.gg.resize(T);
  tr.go.resize(T);
  tr.c.resize(T);
  tr.tc.resize(T);
  tr.h.resize(T);
  tr.y.resize(T);
  Vec hprev = Vec::Zero(h), cprev = Vec::Zero(h);
  for (std::size_t t = 0; t < T; ++t) {
    if (inputs[t].size() != m.in)
      throw std::invalid_argument("lstm forward: input dimension mismatch");
    Vec zcat(m.in + h);
    zcat << inputs[t], hprev;
    Vec pre = m.w_gates * zcat + m.b_gates;
    Vec gi(h), gf(h), gg(h), go(h);
    for (int j = 0; j < h; ++j) {
      gi[j] = sigmoid(pre[j]);
      gf[j] = sigmoid(pre[h + j]);
      gg[j] = std::tanh(pre[2 * h + j]);
      go[j] = sigmoid(pre[3 * h + j]);
    }
    Vec c = gf.cwiseProduct(cprev) + gi.cwiseProduct(gg);
    Vec tc = c.array().tanh().matrix();
    Vec hh = go.cwiseProduct(tc);
    tr.zcat[t] = std::move(zcat);
    tr.gi[t] = std::move(gi);
    tr.gf[t] = std::move(gf);
    tr.gg[t] = std::move(gg);
    tr.go[t] = std::move(go);
    tr.c[t] = std::move(c);
    tr.tc[t] = std::move(tc);
    tr.h[t] = hh;
    tr.y[t] = m.w_out * hh + m.b_out;
    hprev = tr.h[t];
    cprev = tr.c[t];
  }
}

// BPTT over one sequence; accumulates the gradient of sum_t ||y_t - target||^2.
double lstm_sequence_gradient(const LstmModel& m, const LstmSequence& seq, LstmGrad& g) {
  const int h = m.hidden;
  std::vector<Vec> inputs(seq.size());
  for (std::size_t t = 0; t < seq.size(); ++t) inputs[t] = seq[t].input;
  LstmTrace tr;
  lstm_run(m, inputs, tr);

  double err = 0.0;
  Vec dh_next = Vec::Zero(h), dc_next = Vec::Zero(h);
  for (std::size_t t = seq.size(); t-- > 0;) {
    const Vec dy = 2.0 * (tr.y[t] - seq[t].target);
    err += (tr.y[t] - seq[t].target).squaredNorm();
    g.dw_out += dy * tr.h[t].transpose();
    g.db_out += dy;
    Vec dh = m.w_out.transpose() * dy + dh_next;
    Vec dgo = dh.cwiseProduct(tr.tc[t]);
    Vec dc = dh.cwiseProduct(tr.go[t]);
    dc.array() *= 1.0 - tr.tc[t].array().square();
    dc += dc_next;
    const Vec cprev = (t == 0) ? Vec::Zero(h) : tr.c[t - 1];
    Vec dgf = dc.cwiseProduct(cprev);
    Vec dgi = dc.cwiseProduct(tr.gg[t]);
    Vec dgg = dc.cwiseProduct(tr.gi[t]);
    dc_next = dc.cwiseProduct(tr.gf[t]);

    Vec dpre(4 * h);
    for (int j = 0; j < h; ++j) {
      dpre[j] = dgi[j] * tr.gi[t][j] * (1.0 - tr.gi[t][j]);
      dpre[h + j] = dgf[j] * tr.gf[t][j] * (1.0 - tr.gf[t][j]);
      dpre[2 * h + j] = dgg[j] * (1.0 - tr.gg[t][j] * tr.gg[t][j]);
      dpre[3 * h + j] = dgo[j] * tr.go[t][j] * (1.0 - tr.go[t][j]);
    }
    g.dw_gates += dpre * tr.zcat[t].transpose();
    g.db_gates += dpre;
    const Vec dzcat = m.w_gates.transpose() * dpre;
    dh_next = dzcat.tail(h);
  }
  return err;
}

std::size_t batch_label_count(const LstmBatch& batch) {
  std::size_t n = 0;
  for (const auto& seq : batch) n += seq.size();
  return n;
}

}  // namespace

std::vector<Vec> LstmModel::forward(const std::vector<Vec>& inputs) const {
  LstmTrace tr;
  lstm_run(*this, inputs, tr);
  return tr.y;
}

LstmGrad LstmGrad::zeros_like(const LstmModel& m) {
  LstmGrad g;
  g.dw_gates = Mat::Zero(m.w_gates.rows(), m.w_gates.cols());
  g.db_gates = Vec::Zero(m.b_gates.size());
  g.dw_out = Mat::Zero(m.w_out.rows(), m.w_out.cols());
  g.db_out = Vec::Zero(m.b_out.size());
  return g;
}

void LstmGrad::set_zero() {
  dw_gates.setZero();
  db_gates.setZero();
  dw_out.setZero();
  db_out.setZero();
}

void LstmGrad::add(const LstmGrad& other, double scale) {
  dw_gates += scale * other.dw_gates;
  db_gates += scale * other.db_gates;
  dw_out += scale * other.dw_out;
  db_out += scale * other.db_out;
}

double lstm_loss(const LstmModel& model, const LstmBatch& batch) {
  const std::size_t n = batch_label_count(batch);
  if (n == 0) throw std::invalid_argument("lstm_loss: empty batch");
  double sum = 0.0;
  for (const auto& seq : batch) {
    std::vector<Vec> inputs(seq.size());
    for (std::size_t t = 0; t < seq.size(); ++t) inputs[t] = seq[t].input;
    const auto ys = model.forward(inputs);
    for (std::size_t t = 0; t < seq.size(); ++t) sum += (ys[t] - seq[t].target).squaredNorm();
  }
  return sum / static_cast<double>(n);
}

double lstm_batch_gradient(const LstmModel& model, const LstmBatch& batch, LstmGrad& grad,
                           bool parallel) {
  const std::size_t n = batch_label_count(batch);
  if (n == 0) throw std::invalid_argument("lstm_batch_gradient: empty batch");
  std::vector<LstmGrad> slots(batch.size(), LstmGrad::zeros_like(model));
  std::vector<double> errs(batch.size(), 0.0);
  auto kernel = [&](std::size_t i) {
    errs[i] = lstm_sequence_gradient(model, batch[i], slots[i]);
  };
  if (parallel && batch.size() >= kParallelCutoff) {
    parallel_for(static_cast<std::ptrdiff_t>(batch.size()), kernel);
  } else {
    serial_for(static_cast<std::ptrdiff_t>(batch.size()), kernel);
  }
  grad = LstmGrad::zeros_like(model);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < batch.size(); ++i) grad.add(slots[i], inv_n);
  double sum = 0.0;
  for (double e : errs) sum += e;
  return sum * inv_n;
}

TrainResult train_lstm(LstmModel& model, const LstmBatch& batch, const TrainConfig& cfg) {
  if (batch_label_count(batch) == 0) throw std::invalid_argument("train_lstm: empty label set");
  LstmGrad grad;
  Mat m_wg = Mat::Zero(model.w_gates.rows(), model.w_gates.cols()), v_wg = m_wg;
  Mat m_bg = Mat::Zero(model.b_gates.size(), 1), v_bg = m_bg;
  Mat m_wo = Mat::Zero(model.w_out.rows(), model.w_out.cols()), v_wo = m_wo;
  Mat m_bo = Mat::Zero(model.b_out.size(), 1), v_bo = m_bo;
  double loss = 0.0;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    loss = lstm_batch_gradient(model, batch, grad, cfg.parallel);
    if (cfg.stop_loss > 0.0 && loss < cfg.stop_loss) return {loss, epoch};
    apply_update(model.w_gates, grad.dw_gates, m_wg, v_wg, epoch + 1, cfg);
    apply_update(model.w_out, grad.dw_out, m_wo, v_wo, epoch + 1, cfg);
    Mat b = model.b_gates;
    apply_update(b, Mat(grad.db_gates), m_bg, v_bg, epoch + 1, cfg);
    model.b_gates = b;
    b = model.b_out;
    apply_update(b, Mat(grad.db_out), m_bo, v_bo, epoch + 1, cfg);
    model.b_out = b;
  }
  return {lstm_loss(model, batch), epoch};
}

// ---------------------------------------------------------------------------
// Finite-difference verification

namespace {

constexpr double kFdStep = 1e-6;

double rel_err(double a, double f) {
  return std::abs(a - f) / std::max(1e-4, std::abs(a) + std::abs(f));
}

template <class Model, class Batch, class LossFn>
double fd_check_params(Model model, const Batch& batch, LossFn loss, double* analytic,
                       int n_params) {
  double max_err = 0.0;
  int idx = 0;
  auto visit = [&](double* p, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      const double orig = p[i];
      p[i] = orig + kFdStep;
      const double lp = loss(model, batch);
      p[i] = orig - kFdStep;
      const double lm = loss(model, batch);
      p[i] = orig;
      const double fd = (lp - lm) / (2.0 * kFdStep);
      max_err = std::max(max_err, rel_err(analytic[idx], fd));
      ++idx;
    }
  };
  if constexpr (std::is_same_v<Model, MlpModel>) {
    for (std::size_t l = 0; l < model.w.size(); ++l) {
      visit(model.w[l].data(), model.w[l].size());
      visit(model.b[l].data(), model.b[l].size());
    }
  } else {
    visit(model.w_gates.data(), model.w_gates.size());
    visit(model.b_gates.data(), model.b_gates.size());
    visit(model.w_out.data(), model.w_out.size());
    visit(model.b_out.data(), model.b_out.size());
  }
  (void)n_params;
  return max_err;
}

}  // namespace

double grad_check(const MlpModel& model, const MlpBatch& batch) {
  MlpGrad g;
  mlp_batch_gradient(model, batch, g, false);
  std::vector<double> flat;
  for (std::size_t l = 0; l < g.dw.size(); ++l) {
    flat.insert(flat.end(), g.dw[l].data(), g.dw[l].data() + g.dw[l].size());
    flat.insert(flat.end(), g.db[l].data(), g.db[l].data() + g.db[l].size());
  }
  return fd_check_params(model, batch,
                         [](const MlpModel& m, const MlpBatch& b) { return mlp_loss(m, b); },
                         flat.data(), static_cast<int>(flat.size()));
}

double grad_check(const LstmModel& model, const LstmBatch& batch) {
  LstmGrad g;
  lstm_batch_gradient(model, batch, g, false);
  std::vector<double> flat;
  flat.insert(flat.end(), g.dw_gates.data(), g.dw_gates.data() + g.dw_gates.size());
  flat.insert(flat.end(), g.db_gates.data(), g.db_gates.data() + g.db_gates.size());
  flat.insert(flat.end(), g.dw_out.data(), g.dw_out.data() + g.dw_out.size());
  flat.insert(flat.end(), g.db_out.data(), g.db_out.data() + g.db_out.size());
  return fd_check_params(model, batch,
                         [](const LstmModel& m, const LstmBatch& b) { return lstm_loss(m, b); },
                         flat.data(), static_cast<int>(flat.size()));
}

// ---------------------------------------------------------------------------
// Normalizer

void MinMaxNormalizer::fit(const std::vector<Vec>& points) {
  if (points.empty()) throw std::invalid_argument("normalizer: empty fitting set");
  lo = points.front();
  hi = points.front();
  for (const auto& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
}

bool MinMaxNormalizer::degenerate() const {
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (hi[i] - lo[i] <= 1e-12 * std::max(1.0, std::abs(hi[i]) + std::abs(lo[i]))) return true;
  }
  return false;
}

Vec MinMaxNormalizer::normalize(const Vec& x) const {
  Vec y(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double range = hi[i] - lo[i];
    y[i] = range > 0.0 ? (x[i] - lo[i]) / range : 0.0;
  }
  return y;
}

Vec MinMaxNormalizer::denormalize(const Vec& y) const {
  Vec x(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) x[i] = lo[i] + y[i] * (hi[i] - lo[i]);
  return x;
}

namespace {

// Predictions outside the fitted range are extrapolation; keep them within
// half a range of the box.
Vec clamp_to_fit(const Vec& x, const MinMaxNormalizer& n) {
  Vec out = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double pad = 0.5 * (n.hi[i] - n.lo[i]);
    out[i] = std::clamp(out[i], n.lo[i] - pad, n.hi[i] + pad);
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// ITS-FVON

ItsFvon ItsFvon::create(std::uint64_t seed, TrainConfig cfg) {
  ItsFvon net;
  net.model = LstmModel::create(2, 2, 2, seed);
  net.cfg = cfg;
  return net;
}

double ItsFvon::train(const std::vector<std::vector<Eigen::Vector2d>>& reversed_sequences) {
  std::vector<Vec> all;
  for (const auto& seq : reversed_sequences) {
    for (const auto& v : seq) all.push_back(v);
  }
  if (all.empty()) throw std::invalid_argument("its-fvon: empty label set");
  norm.fit(all);
  degenerate = norm.degenerate();
  if (degenerate) return final_loss;

  LstmBatch batch;
  for (const auto& seq : reversed_sequences) {
    if (seq.size() < 2) continue;
    LstmSequence s;
    for (std::size_t t = 0; t + 1 < seq.size(); ++t) {
      s.push_back({norm.normalize(seq[t]), norm.normalize(seq[t + 1])});
    }
    batch.push_back(std::move(s));
  }
  if (batch.empty()) return final_loss;  // nothing trainable this window
  const auto res = train_lstm(model, batch, cfg);
  trained = true;
  return final_loss = res.final_loss;
}

ItsFvon::Prediction ItsFvon::predict(const std::vector<Eigen::Vector2d>& future_to_past) const {
  if (future_to_past.empty()) throw std::invalid_argument("its-fvon: empty query sequence");
  if (!trained || degenerate) return {future_to_past.back(), true};
  std::vector<Vec> inputs;
  inputs.reserve(future_to_past.size());
  for (const auto& v : future_to_past) inputs.push_back(norm.normalize(v));
  const auto ys = model.forward(inputs);
  const Vec v = clamp_to_fit(norm.denormalize(ys.back()), norm);
  return {Eigen::Vector2d(v[0], v[1]), false};
}

// ---------------------------------------------------------------------------
// F2F-FVON

F2fFvon F2fFvon::create(std::uint64_t seed, TrainConfig cfg) {
  F2fFvon net;
  net.model = MlpModel::create({3, 5, 5, 2}, seed);
  net.cfg = cfg;
  return net;
}

double F2fFvon::train(const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector2d>>& labels) {
  if (labels.empty()) throw std::invalid_argument("f2f-fvon: empty label set");
  std::vector<Vec> ps, vs;
  mean_label.setZero();
  for (const auto& [p, v] : labels) {
    ps.push_back(p);
    vs.push_back(v);
    mean_label += v;
  }
  mean_label /= static_cast<double>(labels.size());
  pos_norm.fit(ps);
  vel_norm.fit(vs);
  degenerate = pos_norm.degenerate() || vel_norm.degenerate();
  if (degenerate) return final_loss;

  MlpBatch batch;
  for (const auto& [p, v] : labels) {
    batch.emplace_back(pos_norm.normalize(p), vel_norm.normalize(v));
  }
  const auto res = train_mlp(model, batch, cfg);
  trained = true;
  return final_loss = res.final_loss;
}

F2fFvon::Prediction F2fFvon::predict(const Eigen::Vector3d& camera_point) const {
  if (!trained || degenerate) return {mean_label, true};
  const Vec y =
      clamp_to_fit(vel_norm.denormalize(model.forward(pos_norm.normalize(camera_point))),
                   vel_norm);
  return {Eigen::Vector2d(y[0], y[1]), false};
}

// ---------------------------------------------------------------------------
// TPN

Tpn Tpn::create(std::uint64_t seed, TrainConfig cfg) {
  Tpn net;
  net.model = LstmModel::create(1, 2, 1, seed);
  net.cfg = cfg;
  return net;
}

double Tpn::train(const std::vector<double>& labels) {
  if (labels.size() < 2) throw std::invalid_argument("tpn: need >= 2 labels to train");
  std::vector<Vec> pts;
  for (double v : labels) pts.push_back(Vec::Constant(1, v));
  norm.fit(pts);
  degenerate = norm.degenerate();
  if (degenerate) return final_loss;

  LstmSequence seq;
  for (std::size_t i = 0; i + 1 < labels.size(); ++i) {
    seq.push_back({norm.normalize(Vec::Constant(1, labels[i])),
                   norm.normalize(Vec::Constant(1, labels[i + 1]))});
  }
  const auto res = train_lstm(model, {seq}, cfg);
  trained = true;
  return final_loss = res.final_loss;
}

Tpn::Prediction Tpn::predict(const std::vector<double>& labels) const {
  if (labels.empty()) throw std::logic_error("tpn predict: empty label buffer");
  if (labels.size() < 2 || !trained || degenerate) return {labels.back(), true};
  std::vector<Vec> inputs;
  inputs.reserve(labels.size());
  for (double v : labels) inputs.push_back(norm.normalize(Vec::Constant(1, v)));
  const auto ys = model.forward(inputs);
  return {clamp_to_fit(norm.denormalize(ys.back()), norm)[0], false};
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

Json mat_to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat mat_from_json(const Json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j[0].size() : 0;
  Mat m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Json vec_to_json(const Vec& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Vec vec_from_json(const Json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

Json norm_to_json(const MinMaxNormalizer& n) {
  return Json{{"lo", vec_to_json(n.lo)}, {"hi", vec_to_json(n.hi)}};
}

MinMaxNormalizer norm_from_json(const Json& j) {
  MinMaxNormalizer n;
  n.lo = vec_from_json(j.at("lo"));
  n.hi = vec_from_json(j.at("hi"));
  return n;
}

Json lstm_to_json(const LstmModel& m) {
  return Json{{"layer_sizes", {m.in, m.hidden, m.out}},
              {"w_gates", mat_to_json(m.w_gates)},
              {"b_gates", vec_to_json(m.b_gates)},
              {"w_out", mat_to_json(m.w_out)},
              {"b_out", vec_to_json(m.b_out)},
              {"seed", m.seed}};
}

LstmModel lstm_from_json(const Json& j) {
  const auto sizes = j.at("layer_sizes");
  LstmModel m = LstmModel::create(sizes[0], sizes[1], sizes[2], j.at("seed").get<std::uint64_t>());
  m.w_gates = mat_from_json(j.at("w_gates"));
  m.b_gates = vec_from_json(j.at("b_gates"));
  m.w_out = mat_from_json(j.at("w_out"));
  m.b_out = vec_from_json(j.at("b_out"));
  return m;
}

Json mlp_to_json(const MlpModel& m) {
  Json w = Json::array(), b = Json::array();
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    w.push_back(mat_to_json(m.w[l]));
    b.push_back(vec_to_json(m.b[l]));
  }
  return Json{{"layer_sizes", m.sizes}, {"w", w}, {"b", b}, {"seed", m.seed}};
}

MlpModel mlp_from_json(const Json& j) {
  MlpModel m = MlpModel::create(j.at("layer_sizes").get<std::vector<int>>(),
                                j.at("seed").get<std::uint64_t>());
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    m.w[l] = mat_from_json(j.at("w")[l]);
    m.b[l] = vec_from_json(j.at("b")[l]);
  }
  return m;
}

}  // namespace

std::string to_checkpoint_json(const ItsFvon& net) {
  Json j{{"type", "its-fvon"},
         {"model", lstm_to_json(net.model)},
         {"norm", norm_to_json(net.norm)},
         {"trained", net.trained},
         {"degenerate", net.degenerate}};
  return j.dump(2);
}

std::string to_checkpoint_json(const F2fFvon& net) {
  Json j{{"type", "f2f-fvon"},
         {"model", mlp_to_json(net.model)},
         {"pos_norm", norm_to_json(net.pos_norm)},
         {"vel_norm", norm_to_json(net.vel_norm)},
         {"mean_label", {net.mean_label.x(), net.mean_label.y()}},
         {"trained", net.trained},
         {"degenerate", net.degenerate}};
  return j.dump(2);
}

std::string to_checkpoint_json(const Tpn& net) {
  Json j{{"type", "tpn"},
         {"model", lstm_to_json(net.model)},
         {"norm", norm_to_json(net.norm)},
         {"trained", net.trained},
         {"degenerate", net.degenerate}};
  return j.dump(2);
}

ItsFvon its_from_checkpoint_json(const std::string& text) {
  const Json j = Json::parse(text);
  ItsFvon net;
  net.model = lstm_from_json(j.at("model"));
  net.norm = norm_from_json(j.at("norm"));
  net.trained = j.at("trained").get<bool>();
  net.degenerate = j.at("degenerate").get<bool>();
  return net;
}

F2fFvon f2f_from_checkpoint_json(const std::string& text) {
  const Json j = Json::parse(text);
  F2fFvon net;
  net.model = mlp_from_json(j.at("model"));
  net.pos_norm = norm_from_json(j.at("pos_norm"));
  net.vel_norm = norm_from_json(j.at("vel_norm"));
  net.mean_label = Eigen::Vector2d(j.at("mean_label")[0], j.at("mean_label")[1]);
  net.trained = j.at("trained").get<bool>();
  net.degenerate = j.at("degenerate").get<bool>();
  return net;
}

Tpn tpn_from_checkpoint_json(const std::string& text) {
  const Json j = Json::parse(text);
  Tpn net;
  net.model = lstm_from_json(j.at("model"));
  net.norm = norm_from_json(j.at("norm"));
  net.trained = j.at("trained").get<bool>();
  net.degenerate = j.at("degenerate").get<bool>();
  return net;
}

}  // namespace toncal::nets
