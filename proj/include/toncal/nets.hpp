#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace toncal::nets {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Optimizer { kGd, kAdam };

struct TrainConfig {
  double learning_rate = 1e-3;
  int max_epochs = 1000;
  double stop_loss = 0.0;  // <= 0 disables early stop
  bool parallel = true;
  // The published learning rates only make sense with an adaptive step in
  // this epoch budget; plain gradient descent stays available as a config
  // choice.
  Optimizer optimizer = Optimizer::kAdam;

  static TrainConfig its_default() { return {1e-4, 1000, 1e-5, true, Optimizer::kAdam}; }
  static TrainConfig f2f_default() { return {1e-2, 1500, 0.0, true, Optimizer::kAdam}; }
  static TrainConfig tpn_default() { return {1e-4, 1000, 1e-8, true, Optimizer::kAdam}; }
};

// ---------------------------------------------------------------------------
// Multilayer perceptron, tanh hidden layers, identity output.

struct MlpModel {
  std::vector<int> sizes;
  std::vector<Mat> w;
  std::vector<Vec> b;
  std::uint64_t seed = 0;

  // Weights uniform in [-0.5, 0.5]/sqrt(fan_in); biases zero.
  static MlpModel create(const std::vector<int>& sizes, std::uint64_t seed);

  Vec forward(const Vec& x) const;  // throws std::invalid_argument on dim mismatch
  int parameter_count() const;
};

struct MlpGrad {
  std::vector<Mat> dw;
  std::vector<Vec> db;

  static MlpGrad zeros_like(const MlpModel& m);
  void set_zero();
  void add(const MlpGrad& other, double scale = 1.0);
};

using MlpBatch = std::vector<std::pair<Vec, Vec>>;  // (input, target)

// Mean-squared-error loss (1/n) sum ||y - yhat||^2.
double mlp_loss(const MlpModel& model, const MlpBatch& batch);

// Loss and full-batch gradient. Per-sample gradients go to private slots and
// are reduced in sample order, so parallel and serial runs match bitwise.
double mlp_batch_gradient(const MlpModel& model, const MlpBatch& batch, MlpGrad& grad,
                          bool parallel = true);

struct TrainResult {
  double final_loss = 0.0;
  int epochs_run = 0;
};

TrainResult train_mlp(MlpModel& model, const MlpBatch& batch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Single-layer LSTM with a linear output head. Gate order [i, f, g, o].

struct LstmModel {
  int in = 0, hidden = 0, out = 0;
  Mat w_gates;  // (4h) x (in + h)
  Vec b_gates;  // 4h
  Mat w_out;    // out x h
  Vec b_out;    // out

  static LstmModel create(int in, int hidden, int out, std::uint64_t seed);

  std::uint64_t seed = 0;

  // Stateless full-sequence evaluation from zero (h, c).
  std::vector<Vec> forward(const std::vector<Vec>& inputs) const;
  int parameter_count() const;
};

struct LstmGrad {
  Mat dw_gates;
  Vec db_gates;
  Mat dw_out;
  Vec db_out;

  static LstmGrad zeros_like(const LstmModel& m);
  void set_zero();
  void add(const LstmGrad& other, double scale = 1.0);
};

struct LstmStep {
  Vec input;
  Vec target;  // same size as model.out; every step is labeled
};
using LstmSequence = std::vector<LstmStep>;
using LstmBatch = std::vector<LstmSequence>;

double lstm_loss(const LstmModel& model, const LstmBatch& batch);

// Backprop through time per sequence; slot-reduced like the MLP kernel.
double lstm_batch_gradient(const LstmModel& model, const LstmBatch& batch, LstmGrad& grad,
                           bool parallel = true);

TrainResult train_lstm(LstmModel& model, const LstmBatch& batch, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Gradient verification against central finite differences (step 1e-6).
// Returns max_i |g_a - g_fd| / max(1e-4, |g_a| + |g_fd|).

double grad_check(const MlpModel& model, const MlpBatch& batch);
double grad_check(const LstmModel& model, const LstmBatch& batch);

// ---------------------------------------------------------------------------

struct MinMaxNormalizer {
  Vec lo, hi;

  void fit(const std::vector<Vec>& points);
  bool fitted() const { return lo.size() > 0; }
  bool degenerate() const;  // any dimension with hi ~ lo
  Vec normalize(const Vec& x) const;
  Vec denormalize(const Vec& y) const;
};

// ---------------------------------------------------------------------------
// Paper networks. Each owns its model, normalizers, and training loop;
// predictions carry a fallback flag when a declared degenerate path fired.

struct ItsFvon {
  LstmModel model;
  MinMaxNormalizer norm;  // over 2-D velocities
  TrainConfig cfg = TrainConfig::its_default();
  bool trained = false;
  bool degenerate = false;
  double final_loss = 0.0;

  static ItsFvon create(std::uint64_t seed, TrainConfig cfg = TrainConfig::its_default());

  // Sequences are velocity lists in reversed time (latest frame first).
  double train(const std::vector<std::vector<Eigen::Vector2d>>& reversed_sequences);

  struct Prediction {
    Eigen::Vector2d velocity;
    bool fallback = false;
  };
  // future_to_past = [V^{k+n}, ..., V^{k+1}]; returns the frame-k estimate.
  Prediction predict(const std::vector<Eigen::Vector2d>& future_to_past) const;
};

struct F2fFvon {
  MlpModel model;
  MinMaxNormalizer pos_norm;  // 3-D camera-frame positions
  MinMaxNormalizer vel_norm;  // 2-D velocities
  TrainConfig cfg = TrainConfig::f2f_default();
  bool trained = false;
  bool degenerate = false;
  Eigen::Vector2d mean_label = Eigen::Vector2d::Zero();
  double final_loss = 0.0;

  static F2fFvon create(std::uint64_t seed, TrainConfig cfg = TrainConfig::f2f_default());

  double train(const std::vector<std::pair<Eigen::Vector3d, Eigen::Vector2d>>& labels);

  struct Prediction {
    Eigen::Vector2d velocity;
    bool fallback = false;
  };
  Prediction predict(const Eigen::Vector3d& camera_point) const;
};

struct Tpn {
  LstmModel model;
  MinMaxNormalizer norm;  // scalar offsets
  TrainConfig cfg = TrainConfig::tpn_default();
  bool trained = false;
  bool degenerate = false;
  double final_loss = 0.0;

  static Tpn create(std::uint64_t seed, TrainConfig cfg = TrainConfig::tpn_default());

  // labels ordered oldest to newest; needs >= 2.
  double train(const std::vector<double>& labels);

  struct Prediction {
    double td = 0.0;
    bool fallback = false;
  };
  // Replays the label history to warm (h, c), then emits the one-step-ahead
  // offset. < 2 labels returns the last value, flagged.
  Prediction predict(const std::vector<double>& labels) const;
};

// Checkpoint helpers (layer sizes, row-major weights, normalizer ranges, seed).
std::string to_checkpoint_json(const ItsFvon& net);
std::string to_checkpoint_json(const F2fFvon& net);
std::string to_checkpoint_json(const Tpn& net);
ItsFvon its_from_checkpoint_json(const std::string& text);
F2fFvon f2f_from_checkpoint_json(const std::string& text);
Tpn tpn_from_checkpoint_json(const std::string& text);

}  // namespace toncal::nets
