#include "loong/timenet.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace loong {

namespace {

constexpr double kDurationFloor = 1e-3;

double softplus(double z) { return z > 30.0 ? z : std::log1p(std::exp(z)); }
double softplusGrad(double z) { return 1.0 / (1.0 + std::exp(-z)); }

MatX tanhOf(const MatX& x) { return x.array().tanh().matrix(); }

}  // namespace

bool MlpModel::valid() const {
  if (weights.size() != 3 || biases.size() != 3) return false;
  return weights[0].cols() == inputSize() && weights[2].rows() == m_max;
}

VecX MlpModel::forwardLinear(const VecX& input) const {
  VecX h1 = (weights[0] * input + biases[0]).array().tanh();
  VecX h2 = (weights[1] * h1 + biases[1]).array().tanh();
  return weights[2] * h2 + biases[2];
}

VecX MlpModel::forward(const VecX& input) const {
  VecX z = forwardLinear(input);
  for (int i = 0; i < z.size(); ++i) z(i) = softplus(z(i)) + kDurationFloor;
  return z;
}

VecX encodeInput(const Vec3& v, const Vec3& a, const std::vector<Vec3>& rel_waypoints, int m_max) {
  VecX x = VecX::Zero(6 + 3 * m_max);
  x.segment<3>(0) = v;
  x.segment<3>(3) = a;
  const int m = std::min<int>(m_max, static_cast<int>(rel_waypoints.size()));
  for (int i = 0; i < m; ++i) x.segment<3>(6 + 3 * i) = rel_waypoints[i];
  return x;
}

std::vector<AllocSample> generateDataset(int n, const SamplerConfig& cfg, const FlatLimits& limits,
                                         const QuadParams& params) {
  if (n < 1) throw TimenetError("generateDataset: n must be >= 1");
  std::vector<AllocSample> samples(n);
  std::atomic<int> next{0};
  const int threads = std::max(1, cfg.threads);

  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= n) break;
      // Independent per-sample stream keeps results thread-count invariant.
      std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(i) + 1);
      std::uniform_real_distribution<double> u01(0.0, 1.0);
      std::uniform_int_distribution<int> um(1, cfg.m_max);
      std::uniform_real_distribution<double> uspace(cfg.spacing_min, cfg.spacing_max);
      std::normal_distribution<double> gauss(0.0, 1.0);

      auto randomDir = [&](double z_damp) {
        Vec3 d(gauss(rng), gauss(rng), z_damp * gauss(rng));
        const double norm = d.norm();
        return norm > 1e-9 ? Vec3(d / norm) : Vec3(1, 0, 0);
      };

      AllocSample s;
      for (int attempt = 0; attempt < 10; ++attempt) {
        s.v = u01(rng) * cfg.v_cap * randomDir(0.5);
        s.a = u01(rng) * cfg.a_cap * randomDir(0.5);
        const int m = um(rng);
        s.rel_waypoints.clear();
        Vec3 p = Vec3::Zero();
        for (int k = 0; k < m; ++k) {
          p += uspace(rng) * randomDir(0.4);
          s.rel_waypoints.push_back(p);
        }
        BoundaryState o;
        o.v = s.v;
        o.a = s.a;
        BoundaryState f;
        f.p = s.rel_waypoints.back();
        std::vector<Vec3> interior(s.rel_waypoints.begin(), s.rel_waypoints.end() - 1);
        const MinTimeResult expert = minTimeAllocate(interior, o, f, limits, params);
        if (expert.durations.empty()) continue;
        s.t_star = expert.durations;
        if (expert.converged || attempt == 9) break;
      }
      samples[i] = std::move(s);
    }
  };

  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return samples;
}

void saveDatasetCsv(const std::vector<AllocSample>& data, int m_max, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw TimenetError("cannot write dataset: " + path);
  out << "vx,vy,vz,ax,ay,az";
  for (int i = 0; i < m_max; ++i) out << ",dpx" << i << ",dpy" << i << ",dpz" << i;
  for (int i = 0; i < m_max; ++i) out << ",mask" << i;
  for (int i = 0; i < m_max; ++i) out << ",T" << i;
  out << "\n";
  out.precision(17);
  for (const AllocSample& s : data) {
    out << s.v.x() << "," << s.v.y() << "," << s.v.z() << "," << s.a.x() << "," << s.a.y() << ","
        << s.a.z();
    const int m = static_cast<int>(s.rel_waypoints.size());
    for (int i = 0; i < m_max; ++i) {
      const Vec3 p = i < m ? s.rel_waypoints[i] : Vec3::Zero();
      out << "," << p.x() << "," << p.y() << "," << p.z();
    }
    for (int i = 0; i < m_max; ++i) out << "," << (i < m ? 1 : 0);
    for (int i = 0; i < m_max; ++i) out << "," << (i < m ? s.t_star[i] : 0.0);
    out << "\n";
  }
}

std::vector<AllocSample> loadDatasetCsv(const std::string& path, int* m_max_out) {
  std::ifstream in(path);
  if (!in) throw TimenetError("cannot open dataset: " + path);
  std::string header;
  std::getline(in, header);
  const int cols = static_cast<int>(std::count(header.begin(), header.end(), ',')) + 1;
  const int m_max = (cols - 6) / 5;  // 3 dp + 1 mask + 1 T per slot
  if (m_max_out) *m_max_out = m_max;

  std::vector<AllocSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<double> vals;
    std::string cell;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != cols) throw TimenetError("malformed dataset row");
    AllocSample s;
    s.v = Vec3(vals[0], vals[1], vals[2]);
    s.a = Vec3(vals[3], vals[4], vals[5]);
    for (int i = 0; i < m_max; ++i) {
      if (vals[6 + 3 * m_max + i] > 0.5) {
        s.rel_waypoints.emplace_back(vals[6 + 3 * i], vals[6 + 3 * i + 1], vals[6 + 3 * i + 2]);
        s.t_star.push_back(vals[6 + 4 * m_max + i]);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct BatchData {
  MatX x;     // in x B
  MatX t;     // m_max x B, zero-padded
  MatX mask;  // m_max x B in {0,1}
};

BatchData packBatch(const std::vector<AllocSample>& samples, const std::vector<int>& idx, int lo,
                    int hi, int m_max) {
  const int b = hi - lo;
  BatchData d;
  d.x = MatX::Zero(6 + 3 * m_max, b);
  d.t = MatX::Zero(m_max, b);
  d.mask = MatX::Zero(m_max, b);
  for (int k = 0; k < b; ++k) {
    const AllocSample& s = samples[idx[lo + k]];
    d.x.col(k) = encodeInput(s.v, s.a, s.rel_waypoints, m_max);
    for (std::size_t i = 0; i < s.t_star.size(); ++i) {
      d.t(static_cast<int>(i), k) = s.t_star[i];
      d.mask(static_cast<int>(i), k) = 1.0;
    }
  }
  return d;
}

// Forward/backward on a packed batch. Loss: mean over unmasked slots of
// ((pred - T*) / T*)^2 with pred = softplus(z) + floor.
double batchLossGrad(const MlpModel& model, const BatchData& d, std::vector<MatX>* gw,
                     std::vector<VecX>* gb) {
  const MatX z1 = (model.weights[0] * d.x).colwise() + model.biases[0];
  const MatX h1 = tanhOf(z1);
  const MatX z2 = (model.weights[1] * h1).colwise() + model.biases[1];
  const MatX h2 = tanhOf(z2);
  const MatX z3 = (model.weights[2] * h2).colwise() + model.biases[2];

  const double count = std::max(1.0, d.mask.sum());
  MatX dz3 = MatX::Zero(z3.rows(), z3.cols());
  double loss = 0.0;
  for (int c = 0; c < z3.cols(); ++c) {
    for (int r = 0; r < z3.rows(); ++r) {
      if (d.mask(r, c) == 0.0) continue;
      const double p = softplus(z3(r, c)) + kDurationFloor;
      const double rel = (p - d.t(r, c)) / d.t(r, c);
      loss += rel * rel;
      dz3(r, c) = 2.0 * rel / d.t(r, c) * softplusGrad(z3(r, c)) / count;
    }
  }
  loss /= count;

  if (gw && gb) {
    (*gw)[2] = dz3 * h2.transpose();
    (*gb)[2] = dz3.rowwise().sum();
    MatX dh2 = model.weights[2].transpose() * dz3;
    MatX dz2 = dh2.array() * (1.0 - h2.array().square());
    (*gw)[1] = dz2 * h1.transpose();
    (*gb)[1] = dz2.rowwise().sum();
    MatX dh1 = model.weights[1].transpose() * dz2;
    MatX dz1 = dh1.array() * (1.0 - h1.array().square());
    (*gw)[0] = dz1 * d.x.transpose();
    (*gb)[0] = dz1.rowwise().sum();
  }
  return loss;
}

}  // namespace

double lossAndGradient(const MlpModel& model, const std::vector<AllocSample>& batch,
                       std::vector<MatX>* grad_w, std::vector<VecX>* grad_b) {
  std::vector<int> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  const BatchData d = packBatch(batch, idx, 0, static_cast<int>(batch.size()), model.m_max);
  if (grad_w) {
    grad_w->assign(3, MatX());
    grad_b->assign(3, VecX());
  }
  return batchLossGrad(model, d, grad_w, grad_b);
}

double meanLoss(const MlpModel& model, const std::vector<AllocSample>& samples) {
  return lossAndGradient(model, samples, nullptr, nullptr);
}

double medianRelativeError(const MlpModel& model, const std::vector<AllocSample>& samples) {
  std::vector<double> errs;
  for (const AllocSample& s : samples) {
    const VecX pred = model.forward(encodeInput(s.v, s.a, s.rel_waypoints, model.m_max));
    for (std::size_t i = 0; i < s.t_star.size(); ++i) {
      errs.push_back(std::abs(pred(static_cast<int>(i)) - s.t_star[i]) / s.t_star[i]);
    }
  }
  if (errs.empty()) return 0.0;
  std::sort(errs.begin(), errs.end());
  return errs[errs.size() / 2];
}

TrainResult train(const std::vector<AllocSample>& dataset, const TrainConfig& cfg, int m_max) {
  if (dataset.empty()) throw TimenetError("train: empty dataset");
  std::mt19937_64 rng(cfg.seed);

  // 90/10 split after a deterministic shuffle.
  std::vector<int> idx(dataset.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  const int val_count =
      std::min<int>(static_cast<int>(dataset.size()) - 1,
                    std::max(1, static_cast<int>(cfg.val_fraction * dataset.size())));
  std::vector<int> train_idx(idx.begin(), idx.end() - val_count);
  std::vector<int> val_idx(idx.end() - val_count, idx.end());
  if (dataset.size() == 1) {
    train_idx = idx;
    val_idx = idx;
  }

  // Input standardization over the training split, folded into layer 1 at
  // the end so the stored model consumes the canonical zero-padded encoding.
  const int in_dim = 6 + 3 * m_max;
  VecX mu = VecX::Zero(in_dim), sigma = VecX::Ones(in_dim);
  {
    MatX all = MatX::Zero(in_dim, static_cast<int>(train_idx.size()));
    for (std::size_t k = 0; k < train_idx.size(); ++k) {
      const AllocSample& s = dataset[train_idx[k]];
      all.col(static_cast<int>(k)) = encodeInput(s.v, s.a, s.rel_waypoints, m_max);
    }
    mu = all.rowwise().mean();
    for (int r = 0; r < in_dim; ++r) {
      const double var = (all.row(r).array() - mu(r)).square().mean();
      sigma(r) = std::max(1e-3, std::sqrt(var));
    }
  }

  MlpModel model;
  model.m_max = m_max;
  const int h = 512;
  auto init = [&](int rows, int cols) {
    std::normal_distribution<double> g(0.0, std::sqrt(2.0 / (rows + cols)));
    MatX w(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) w(i, j) = g(rng);
    return w;
  };
  model.weights = {init(h, in_dim), init(h, h), init(m_max, h)};
  model.biases = {VecX::Zero(h), VecX::Zero(h), VecX::Constant(m_max, 0.5)};

  std::vector<MatX> vel_w(3);
  std::vector<VecX> vel_b(3);
  for (int l = 0; l < 3; ++l) {
    vel_w[l] = MatX::Zero(model.weights[l].rows(), model.weights[l].cols());
    vel_b[l] = VecX::Zero(model.biases[l].size());
  }

  auto standardized = [&](const BatchData& d) {
    BatchData out = d;
    out.x = (d.x.colwise() - mu).array().colwise() / sigma.array();
    return out;
  };

  std::vector<int> train_order = train_idx;
  const BatchData val_batch =
      standardized(packBatch(dataset, val_idx, 0, static_cast<int>(val_idx.size()), m_max));

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<MatX> best_w;
  std::vector<VecX> best_b;

  std::vector<MatX> gw(3);
  std::vector<VecX> gb(3);
  const int n_train = static_cast<int>(train_order.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(train_order.begin(), train_order.end(), rng);
    const double lr =
        0.5 * cfg.lr * (1.0 + std::cos(kPi * epoch / std::max(1, cfg.epochs - 1)));
    double epoch_loss = 0.0;
    int batches = 0;
    for (int lo = 0; lo < n_train; lo += cfg.batch_size) {
      const int hi = std::min(n_train, lo + cfg.batch_size);
      const BatchData d = standardized(packBatch(dataset, train_order, lo, hi, m_max));
      const double loss = batchLossGrad(model, d, &gw, &gb);
      if (!std::isfinite(loss)) throw TimenetError("train: loss diverged (NaN)");
      epoch_loss += loss;
      ++batches;
      for (int l = 0; l < 3; ++l) {
        vel_w[l] = cfg.momentum * vel_w[l] - lr * gw[l];
        vel_b[l] = cfg.momentum * vel_b[l] - lr * gb[l];
        model.weights[l] += vel_w[l];
        model.biases[l] += vel_b[l];
      }
    }
    result.train_loss.push_back(epoch_loss / std::max(1, batches));

    const double val_loss = batchLossGrad(model, val_batch, nullptr, nullptr);
    result.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best_w = model.weights;
      best_b = model.biases;
    }
    if (cfg.verbose && (epoch % 10 == 0 || epoch + 1 == cfg.epochs)) {
      std::printf("epoch %3d  train %.5f  val %.5f  lr %.2e\n", epoch,
                  result.train_loss.back(), val_loss, lr);
    }
  }

  model.weights = best_w.empty() ? model.weights : best_w;
  model.biases = best_b.empty() ? model.biases : best_b;
  result.best_val_loss = best_val;

  // Fold standardization into the first layer: W x_std + b == W' x + b'.
  MatX w0 = model.weights[0];
  for (int c = 0; c < w0.cols(); ++c) w0.col(c) /= sigma(c);
  model.biases[0] -= w0 * mu;
  model.weights[0] = w0;

  result.model = std::move(model);
  return result;
}

std::vector<double> infer(const MlpModel& model, const Vec3& v, const Vec3& a,
                          const std::vector<Vec3>& rel_waypoints) {
  const int m = static_cast<int>(rel_waypoints.size());
  if (m < 1) throw TimenetError("infer: need at least one waypoint");
  if (m > model.m_max) throw TimenetError("infer: too many waypoints, truncate the lookahead");
  const VecX out = model.forward(encodeInput(v, a, rel_waypoints, model.m_max));
  std::vector<double> durations(m);
  for (int i = 0; i < m; ++i) durations[i] = out(i);
  return durations;
}

void saveModel(const MlpModel& model, const std::string& path) {
  nlohmann::json header;
  header["layer_sizes"] = {model.inputSize(), static_cast<int>(model.weights[0].rows()),
                           static_cast<int>(model.weights[1].rows()), model.m_max};
  header["activation"] = model.activation;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw TimenetError("cannot write model: " + path);
  const uint32_t hlen = static_cast<uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), htext.size());
  auto writeMat = [&](const MatX& m) {
    for (int i = 0; i < m.rows(); ++i)
      for (int j = 0; j < m.cols(); ++j) {
        const float f = static_cast<float>(m(i, j));
        out.write(reinterpret_cast<const char*>(&f), sizeof(f));
      }
  };
  for (int l = 0; l < 3; ++l) {
    writeMat(model.weights[l]);
    writeMat(model.biases[l]);
  }
}

MlpModel loadModel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TimenetError("cannot open model: " + path);
  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  const nlohmann::json header = nlohmann::json::parse(htext);
  const std::vector<int> sizes = header.at("layer_sizes").get<std::vector<int>>();
  if (sizes.size() != 4) throw TimenetError("model header: expected 4 layer sizes");

  MlpModel model;
  model.m_max = sizes[3];
  model.activation = header.value("activation", "tanh");
  auto readMat = [&](int rows, int cols) {
    MatX m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        float f = 0;
        in.read(reinterpret_cast<char*>(&f), sizeof(f));
        m(i, j) = f;
      }
    return m;
  };
  for (int l = 0; l < 3; ++l) {
    const int rows = sizes[l + 1];
    const int cols = sizes[l];
    model.weights.push_back(readMat(rows, cols));
    model.biases.push_back(readMat(rows, 1));
  }
  if (!in) throw TimenetError("model file truncated: " + path);
  if ((6 + 3 * model.m_max) != sizes[0]) throw TimenetError("model header/input mismatch");
  return model;
}

}  // namespace loong
