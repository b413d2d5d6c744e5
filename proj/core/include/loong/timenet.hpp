#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "loong/geometry.hpp"
#include "loong/polytraj.hpp"

namespace loong {

struct TimenetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two-hidden-layer perceptron mapping (v, a, dp_1..dp_Mmax) to per-segment
// durations. Hidden activation tanh, output through softplus + 1e-3 so every
// unmasked duration is strictly positive and well-posed downstream.
struct MlpModel {
  int m_max = 6;
  std::string activation = "tanh";
  std::vector<MatX> weights;  // [h1 x in], [h2 x h1], [m_max x h2]
  std::vector<VecX> biases;

  int inputSize() const { return 6 + 3 * m_max; }
  bool valid() const;

  // Raw network output before the positivity transform.
  VecX forwardLinear(const VecX& input) const;
  // Strictly positive durations for all m_max slots.
  VecX forward(const VecX& input) const;
};

// Zero-padded canonical input encoding. This is the unique entry point used
// by training, evaluation and flight inference alike.
VecX encodeInput(const Vec3& v, const Vec3& a, const std::vector<Vec3>& rel_waypoints, int m_max);

struct AllocSample {
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  std::vector<Vec3> rel_waypoints;  // m entries, m <= m_max
  std::vector<double> t_star;       // m entries, all > 0
};

struct SamplerConfig {
  int m_max = 6;
  double v_cap = 10.0;       // m/s
  double a_cap = 10.0;       // m/s^2
  double spacing_min = 1.0;  // m
  double spacing_max = 8.0;  // m
  uint64_t seed = 1;
  int threads = 1;
};

// Labels drawn from the minimum-time expert; deterministic under seed
// regardless of thread count (per-sample RNG streams).
std::vector<AllocSample> generateDataset(int n, const SamplerConfig& cfg, const FlatLimits& limits,
                                         const QuadParams& params);

void saveDatasetCsv(const std::vector<AllocSample>& data, int m_max, const std::string& path);
std::vector<AllocSample> loadDatasetCsv(const std::string& path, int* m_max_out = nullptr);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double lr = 1e-3;  // cosine-decayed
  double momentum = 0.9;
  double val_fraction = 0.1;
  uint64_t seed = 7;
  bool verbose = false;
};

struct TrainResult {
  MlpModel model;  // best-validation checkpoint
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  double best_val_loss = 0.0;
};

// Mini-batch gradient descent with momentum on the masked squared relative
// error. Throws TimenetError on divergence (NaN loss).
TrainResult train(const std::vector<AllocSample>& dataset, const TrainConfig& cfg, int m_max = 6);

// Masked squared-relative-error loss over a set of samples, with parameter
// gradients. Exposed for the finite-difference check.
double lossAndGradient(const MlpModel& model, const std::vector<AllocSample>& batch,
                       std::vector<MatX>* grad_w, std::vector<VecX>* grad_b);

double meanLoss(const MlpModel& model, const std::vector<AllocSample>& samples);

// Median |T_pred - T*| / T* over all unmasked slots.
double medianRelativeError(const MlpModel& model, const std::vector<AllocSample>& samples);

// Durations for the m real waypoints. Throws TimenetError when m is out of
// [1, m_max]; callers truncate the lookahead instead.
std::vector<double> infer(const MlpModel& model, const Vec3& v, const Vec3& a,
                          const std::vector<Vec3>& rel_waypoints);

// Flat binary of little-endian f32 prefixed by a length-prefixed JSON header
// {layer_sizes, activation}; bit-exact round trip.
void saveModel(const MlpModel& model, const std::string& path);
MlpModel loadModel(const std::string& path);

}  // namespace loong
