#pragma once

// The point policy: a shared vector-neuron encoder turns each point's
// observation history into a token, a transformer encoder mixes the N object
// tokens with the 5 fingertip tokens (only the latter carry learned
// positional embeddings), and a shared MLP head maps each fingertip token to
// its predicted future trajectory. Training is plain supervised MSE with
// similarity-transform augmentation, run through the autodiff tape.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "aina/autodiff.hpp"
#include "aina/common.hpp"
#include "aina/crc32.hpp"
#include "aina/geom.hpp"
#include "aina/rng.hpp"
#include "aina/threading.hpp"
#include "aina/trajectory.hpp"
#include "aina/trajectory_io.hpp"
#include "aina/vn.hpp"

namespace aina {
namespace policy {

using Mat = Eigen::MatrixXd;

struct TransformerConfig {
  int layers = 4;
  int heads = 4;
  int feedforward_dim = 0;  // 0 = 4 * token_dim
};

struct PolicyConfig {
  int T_o = 10;  // observation history, frames
  int T_p = 30;  // prediction horizon, frames
  int N = 500;   // object points per frame
  std::vector<int> vn_channels = {16, 32};
  int token_dim = 96;
  TransformerConfig transformer;
  std::vector<int> head_hidden = {256, 256};
  int epochs = 2000;
  int batch_size = 64;
  double learning_rate = 1e-4;
  uint64_t seed = 0;
  std::string augment_scale_pivot = "origin";  // or "centroid"

  int feedforward_dim() const {
    return transformer.feedforward_dim > 0 ? transformer.feedforward_dim : 4 * token_dim;
  }

  void validate() const {
    if (T_o < 1 || T_p < 1) throw BadConfig("T_o and T_p must be >= 1");
    if (N < 1) throw BadConfig("N must be >= 1");
    if (token_dim < 1 || transformer.heads < 1 || token_dim % transformer.heads != 0)
      throw BadConfig("token_dim must be divisible by heads");
    if (vn_channels.empty()) throw BadConfig("vn_channels must be non-empty");
    if (transformer.layers < 1) throw BadConfig("transformer.layers must be >= 1");
    if (epochs < 1 || batch_size < 1) throw BadConfig("epochs and batch_size must be >= 1");
    if (!(learning_rate > 0)) throw BadConfig("learning_rate must be positive");
    if (augment_scale_pivot != "origin" && augment_scale_pivot != "centroid")
      throw BadConfig("augment_scale_pivot must be 'origin' or 'centroid'");
  }

  // Small configuration for desk-scale experiments and CI-speed training.
  static PolicyConfig desk() {
    PolicyConfig c;
    c.N = 32;
    c.vn_channels = {8, 16};
    c.token_dim = 32;
    c.transformer = {2, 4, 96};
    c.head_hidden = {64, 64};
    c.epochs = 300;
    c.batch_size = 64;
    c.learning_rate = 1e-3;
    return c;
  }
};

inline nlohmann::ordered_json to_json(const PolicyConfig& c) {
  nlohmann::ordered_json j;
  j["T_o"] = c.T_o;
  j["T_p"] = c.T_p;
  j["N"] = c.N;
  j["vn_channels"] = c.vn_channels;
  j["token_dim"] = c.token_dim;
  j["transformer"] = {{"layers", c.transformer.layers},
                      {"heads", c.transformer.heads},
                      {"feedforward_dim", c.feedforward_dim()}};
  j["head_hidden"] = c.head_hidden;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["augment_scale_pivot"] = c.augment_scale_pivot;
  return j;
}

// Strict parse: unknown keys are rejected, known keys override defaults.
inline PolicyConfig config_from_json(const nlohmann::json& j, PolicyConfig base = {}) {
  if (!j.is_object()) throw BadConfig("policy config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "T_o") base.T_o = value.get<int>();
    else if (key == "T_p") base.T_p = value.get<int>();
    else if (key == "N") base.N = value.get<int>();
    else if (key == "vn_channels") base.vn_channels = value.get<std::vector<int>>();
    else if (key == "token_dim") base.token_dim = value.get<int>();
    else if (key == "transformer") {
      for (const auto& [tk, tv] : value.items()) {
        if (tk == "layers") base.transformer.layers = tv.get<int>();
        else if (tk == "heads") base.transformer.heads = tv.get<int>();
        else if (tk == "feedforward_dim") base.transformer.feedforward_dim = tv.get<int>();
        else throw BadConfig("unknown transformer key '" + tk + "'");
      }
    }
    else if (key == "head_hidden") base.head_hidden = value.get<std::vector<int>>();
    else if (key == "epochs") base.epochs = value.get<int>();
    else if (key == "batch_size") base.batch_size = value.get<int>();
    else if (key == "learning_rate") base.learning_rate = value.get<double>();
    else if (key == "seed") base.seed = value.get<uint64_t>();
    else if (key == "augment_scale_pivot") base.augment_scale_pivot = value.get<std::string>();
    else throw BadConfig("unknown policy config key '" + key + "'");
  }
  base.validate();
  return base;
}

// --- Model -------------------------------------------------------------------

struct PolicyModel {
  PolicyConfig config;

  std::vector<vn::VNLayer> vn_layers;
  Mat token_w, token_b;  // (3*C_last) x D, 1 x D
  Mat pos_embed;         // 5 x D, fingertip tokens only
  struct Block {
    Mat ln1_g, ln1_b;
    Mat wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln2_g, ln2_b;
    Mat ff1_w, ff1_b, ff2_w, ff2_b;
  };
  std::vector<Block> blocks;
  Mat lnf_g, lnf_b;
  std::vector<std::pair<Mat, Mat>> head;  // shared across fingertip tokens

  // Declaration order; serialization, init and gradient layout all follow it.
  std::vector<Mat*> params() {
    std::vector<Mat*> out;
    for (auto& l : vn_layers) {
      out.push_back(&l.linear);
      out.push_back(&l.q);
      out.push_back(&l.k);
    }
    out.push_back(&token_w);
    out.push_back(&token_b);
    out.push_back(&pos_embed);
    for (auto& b : blocks) {
      for (Mat* m : {&b.ln1_g, &b.ln1_b, &b.wq, &b.bq, &b.wk, &b.bk, &b.wv, &b.bv, &b.wo, &b.bo,
                     &b.ln2_g, &b.ln2_b, &b.ff1_w, &b.ff1_b, &b.ff2_w, &b.ff2_b})
        out.push_back(m);
    }
    out.push_back(&lnf_g);
    out.push_back(&lnf_b);
    for (auto& [w, b] : head) {
      out.push_back(&w);
      out.push_back(&b);
    }
    return out;
  }

  std::vector<const Mat*> params() const {
    return const_cast<PolicyModel*>(this)->params_const_view();
  }

  static PolicyModel init(const PolicyConfig& config) {
    config.validate();
    PolicyModel m;
    m.config = config;
    Rng rng(Rng::derive(config.seed, 0x1417));
    auto xavier = [&rng](Eigen::Index rows, Eigen::Index cols) {
      const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
      Mat w(rows, cols);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = rng.uniform(-a, a);
      return w;
    };
    int c_in = config.T_o;
    for (int c_out : config.vn_channels) {
      vn::VNLayer layer;
      layer.linear = xavier(c_out, c_in);
      layer.q = xavier(c_out, c_out);
      layer.k = xavier(c_out, c_out);
      m.vn_layers.push_back(std::move(layer));
      c_in = c_out;
    }
    const int d = config.token_dim;
    m.token_w = xavier(3 * c_in, d);
    m.token_b = Mat::Zero(1, d);
    m.pos_embed = Mat::Zero(kNumFingertips, d);
    for (Eigen::Index i = 0; i < m.pos_embed.rows(); ++i)
      for (Eigen::Index j = 0; j < d; ++j) m.pos_embed(i, j) = rng.uniform(-0.02, 0.02);
    const int ff = config.feedforward_dim();
    for (int l = 0; l < config.transformer.layers; ++l) {
      Block b;
      b.ln1_g = Mat::Ones(1, d);
      b.ln1_b = Mat::Zero(1, d);
      b.wq = xavier(d, d);
      b.bq = Mat::Zero(1, d);
      b.wk = xavier(d, d);
      b.bk = Mat::Zero(1, d);
      b.wv = xavier(d, d);
      b.bv = Mat::Zero(1, d);
      b.wo = xavier(d, d);
      b.bo = Mat::Zero(1, d);
      b.ln2_g = Mat::Ones(1, d);
      b.ln2_b = Mat::Zero(1, d);
      b.ff1_w = xavier(d, ff);
      b.ff1_b = Mat::Zero(1, ff);
      b.ff2_w = xavier(ff, d);
      b.ff2_b = Mat::Zero(1, d);
      m.blocks.push_back(std::move(b));
    }
    m.lnf_g = Mat::Ones(1, d);
    m.lnf_b = Mat::Zero(1, d);
    int h_in = d;
    for (int h : config.head_hidden) {
      m.head.emplace_back(xavier(h_in, h), Mat::Zero(1, h));
      h_in = h;
    }
    m.head.emplace_back(xavier(h_in, 3 * config.T_p), Mat::Zero(1, 3 * config.T_p));
    return m;
  }

 private:
  std::vector<const Mat*> params_const_view() {
    std::vector<const Mat*> out;
    for (Mat* p : params()) out.push_back(p);
    return out;
  }
};

// --- Samples -----------------------------------------------------------------

struct TrainingSample {
  std::vector<PointMatrix> input_objects;    // T_o of N x 3
  std::vector<HandMatrix> input_fingertips;  // T_o
  std::vector<HandMatrix> target_fingertips; // T_p
};

inline void check_sample_shapes(const TrainingSample& s, const PolicyConfig& c) {
  if (static_cast<int>(s.input_objects.size()) != c.T_o ||
      static_cast<int>(s.input_fingertips.size()) != c.T_o ||
      static_cast<int>(s.target_fingertips.size()) != c.T_p)
    throw ShapeMismatch("sample horizon does not match config");
  for (const auto& o : s.input_objects)
    if (o.rows() != c.N) throw ShapeMismatch("object point count does not match config N");
}

// Mean over all T_p*5*3 elements of the squared difference.
inline double mse_loss(const std::vector<HandMatrix>& pred, const std::vector<HandMatrix>& target) {
  if (pred.size() != target.size() || pred.empty()) throw ShapeMismatch("mse_loss");
  double sum = 0;
  for (size_t t = 0; t < pred.size(); ++t) sum += (pred[t] - target[t]).squaredNorm();
  return sum / static_cast<double>(pred.size() * 5 * 3);
}

// --- Forward pass ------------------------------------------------------------

namespace detail {

// Point histories as one T_o x 3P matrix; fingertips occupy the first five
// column triples, object points the rest.
inline Mat history_matrix(const PolicyConfig& c, const std::vector<HandMatrix>& fingertips,
                          const std::vector<PointMatrix>& objects) {
  const int P = kNumFingertips + c.N;
  Mat v(c.T_o, 3 * P);
  for (int t = 0; t < c.T_o; ++t) {
    for (int f = 0; f < kNumFingertips; ++f)
      for (int k = 0; k < 3; ++k) v(t, 3 * f + k) = fingertips[t](f, k);
    for (int i = 0; i < c.N; ++i)
      for (int k = 0; k < 3; ++k) v(t, 3 * (kNumFingertips + i) + k) = objects[t](i, k);
  }
  return v;
}

inline Mat target_matrix(const PolicyConfig& c, const std::vector<HandMatrix>& target) {
  Mat m(kNumFingertips, 3 * c.T_p);
  for (int t = 0; t < c.T_p; ++t)
    for (int f = 0; f < kNumFingertips; ++f)
      for (int k = 0; k < 3; ++k) m(f, 3 * t + k) = target[t](f, k);
  return m;
}

struct ForwardIds {
  ad::Tape::Id pred = -1;   // 5 x 3*T_p
  ad::Tape::Id loss = -1;   // 1 x 1, only when a target was given
  std::vector<ad::Tape::Id> param_ids;  // same order as PolicyModel::params()
};

inline ForwardIds build_forward(ad::Tape& tape, const PolicyModel& m, const Mat& history,
                                const Mat* target) {
  using Id = ad::Tape::Id;
  ForwardIds out;
  auto param = [&](const Mat& p) {
    const Id id = tape.param(p);
    out.param_ids.push_back(id);
    return id;
  };

  Id v = tape.leaf(history);
  for (const auto& layer : m.vn_layers) {
    const Id w = param(layer.linear), q = param(layer.q), k = param(layer.k);
    v = tape.matmul(w, v);
    v = tape.vn_gate(tape.matmul(q, v), tape.matmul(k, v));
  }
  const Id flat = tape.flatten_point_blocks(v);  // P x 3C
  Id tokens = tape.add_rowvec(tape.matmul(flat, param(m.token_w)), param(m.token_b));
  tokens = tape.add_rows_at(tokens, param(m.pos_embed), 0);

  const int heads = m.config.transformer.heads;
  const int dh = m.config.token_dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (const auto& b : m.blocks) {
    const Id h = tape.layer_norm_rows(tokens, param(b.ln1_g), param(b.ln1_b));
    const Id q = tape.add_rowvec(tape.matmul(h, param(b.wq)), param(b.bq));
    const Id k = tape.add_rowvec(tape.matmul(h, param(b.wk)), param(b.bk));
    const Id vv = tape.add_rowvec(tape.matmul(h, param(b.wv)), param(b.bv));
    std::vector<Id> ctx;
    for (int hd = 0; hd < heads; ++hd) {
      const Id qh = tape.slice_cols(q, hd * dh, dh);
      const Id kh = tape.slice_cols(k, hd * dh, dh);
      const Id vh = tape.slice_cols(vv, hd * dh, dh);
      const Id scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dh);
      ctx.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    const Id proj = tape.add_rowvec(tape.matmul(tape.concat_cols(ctx), param(b.wo)), param(b.bo));
    tokens = tape.add(tokens, proj);
    const Id h2 = tape.layer_norm_rows(tokens, param(b.ln2_g), param(b.ln2_b));
    const Id ff1 = tape.relu(tape.add_rowvec(tape.matmul(h2, param(b.ff1_w)), param(b.ff1_b)));
    const Id ff2 = tape.add_rowvec(tape.matmul(ff1, param(b.ff2_w)), param(b.ff2_b));
    tokens = tape.add(tokens, ff2);
  }
  const Id normed = tape.layer_norm_rows(tokens, param(m.lnf_g), param(m.lnf_b));
  Id x = tape.slice_rows(normed, 0, kNumFingertips);
  for (size_t i = 0; i + 1 < m.head.size(); ++i)
    x = tape.relu(tape.add_rowvec(tape.matmul(x, param(m.head[i].first)), param(m.head[i].second)));
  out.pred = tape.add_rowvec(tape.matmul(x, param(m.head.back().first)), param(m.head.back().second));

  if (target) {
    const Id tgt = tape.leaf(*target);
    const Id diff = tape.sub(out.pred, tgt);
    out.loss = tape.mean_all(tape.mul(diff, diff));
  }
  return out;
}

}  // namespace detail

// Deterministic forward pass. Object point order does not matter: object
// tokens carry no positional encoding and attention is permutation-invariant
// from the fingertip tokens' point of view.
inline std::vector<HandMatrix> predict(const PolicyModel& m,
                                       const std::vector<HandMatrix>& input_fingertips,
                                       const std::vector<PointMatrix>& input_objects) {
  TrainingSample probe{input_objects, input_fingertips, {}};
  probe.target_fingertips.resize(m.config.T_p, HandMatrix::Zero());
  check_sample_shapes(probe, m.config);
  ad::Tape tape;
  const auto fwd = detail::build_forward(
      tape, m, detail::history_matrix(m.config, input_fingertips, input_objects), nullptr);
  const Mat& p = tape.val(fwd.pred);
  std::vector<HandMatrix> pred(m.config.T_p);
  for (int t = 0; t < m.config.T_p; ++t)
    for (int f = 0; f < kNumFingertips; ++f)
      for (int k = 0; k < 3; ++k) pred[t](f, k) = p(f, 3 * t + k);
  return pred;
}

// --- Augmentation ------------------------------------------------------------

inline constexpr double kAugTranslation = 0.30;       // meters, per axis
inline constexpr double kAugScaleLo = 0.8, kAugScaleHi = 1.2;
inline constexpr double kAugYaw = 60.0 * M_PI / 180.0;
inline constexpr double kFingertipNoiseSigma = 0.01;  // meters
inline constexpr double kFingertipNoiseClip = 0.02;   // meters

struct AugmentationSample {
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;
  double yaw = 0.0;
  std::vector<HandMatrix> fingertip_noise;  // one 5x3 block per input frame
};

// Draw order is part of the determinism contract: translation xyz, scale,
// yaw, then per-frame fingertip noise row-major.
inline AugmentationSample draw_augmentation(Rng& rng, int t_o) {
  AugmentationSample a;
  for (int i = 0; i < 3; ++i) a.translation[i] = rng.uniform(-kAugTranslation, kAugTranslation);
  a.scale = rng.uniform(kAugScaleLo, kAugScaleHi);
  a.yaw = rng.uniform(-kAugYaw, kAugYaw);
  a.fingertip_noise.resize(t_o);
  for (int t = 0; t < t_o; ++t)
    for (int f = 0; f < kNumFingertips; ++f)
      for (int k = 0; k < 3; ++k)
        a.fingertip_noise[t](f, k) = rng.clipped_normal(kFingertipNoiseSigma, kFingertipNoiseClip);
  return a;
}

// S = Translate(t) . Scale(s about pivot) . RotZ(yaw about pivot), applied to
// object points, input fingertips and target fingertips alike; the clipped
// Gaussian noise is then added to the input fingertips only.
inline TrainingSample apply_augmentation(const TrainingSample& s, const AugmentationSample& a,
                                         const std::string& scale_pivot = "origin") {
  Vec3 pivot = Vec3::Zero();
  if (scale_pivot == "centroid") pivot = centroid(s.input_objects.front());
  const Mat3 rz = rot_z(a.yaw).rotation;
  auto map_points = [&](auto points) {
    using M = decltype(points);
    M out = points;
    out.rowwise() -= pivot.transpose();
    out = a.scale * (out * rz.transpose());
    out.rowwise() += (pivot + a.translation).transpose();
    return out;
  };
  TrainingSample out;
  out.input_objects.reserve(s.input_objects.size());
  for (const auto& o : s.input_objects) out.input_objects.push_back(map_points(o));
  out.input_fingertips.reserve(s.input_fingertips.size());
  for (size_t t = 0; t < s.input_fingertips.size(); ++t)
    out.input_fingertips.push_back(HandMatrix(map_points(HandMatrix(s.input_fingertips[t])) +
                                              a.fingertip_noise[t]));
  out.target_fingertips.reserve(s.target_fingertips.size());
  for (const auto& f : s.target_fingertips)
    out.target_fingertips.push_back(map_points(HandMatrix(f)));
  return out;
}

inline TrainingSample augment(const TrainingSample& s, Rng& rng,
                              const std::string& scale_pivot = "origin") {
  return apply_augmentation(s, draw_augmentation(rng, static_cast<int>(s.input_fingertips.size())),
                            scale_pivot);
}

// --- Window extraction -------------------------------------------------------

struct WindowRef {
  int trajectory = 0;
  int start = 0;
};

// Sliding windows with stride 1. Indices past the end repeat the final
// frame, for targets always and for inputs when the trajectory is shorter
// than T_o.
inline TrainingSample materialize_window(const Trajectory& t, int start, const PolicyConfig& c) {
  const int last = static_cast<int>(t.frames.size()) - 1;
  TrainingSample s;
  for (int k = 0; k < c.T_o; ++k) {
    const Frame& f = t.frames[std::min(start + k, last)];
    s.input_objects.push_back(f.objects);
    s.input_fingertips.push_back(f.hand);
  }
  for (int k = 0; k < c.T_p; ++k)
    s.target_fingertips.push_back(t.frames[std::min(start + c.T_o + k, last)].hand);
  return s;
}

inline std::vector<WindowRef> make_windows(const std::vector<const Trajectory*>& trajs,
                                           const PolicyConfig& c) {
  std::vector<WindowRef> windows;
  for (size_t ti = 0; ti < trajs.size(); ++ti) {
    const int len = static_cast<int>(trajs[ti]->frames.size());
    const int count = std::max(1, len - c.T_o + 1);
    for (int s = 0; s < count; ++s) windows.push_back({static_cast<int>(ti), s});
  }
  return windows;
}

// --- Gradients ---------------------------------------------------------------

// Exact gradients of loss_scale * mean batch loss w.r.t. every parameter,
// in PolicyModel::params() order.
inline std::vector<Mat> gradients(const PolicyModel& m, const std::vector<TrainingSample>& batch,
                                  double loss_scale = 1.0, double* mean_loss = nullptr) {
  if (batch.empty()) throw EmptyDataset("gradients on empty batch");
  std::vector<Mat> grads;
  for (const Mat* p : m.params()) grads.push_back(Mat::Zero(p->rows(), p->cols()));
  double loss_sum = 0;
  for (const TrainingSample& s : batch) {
    check_sample_shapes(s, m.config);
    ad::Tape tape;
    const Mat target = detail::target_matrix(m.config, s.target_fingertips);
    const auto fwd = detail::build_forward(
        tape, m, detail::history_matrix(m.config, s.input_fingertips, s.input_objects), &target);
    tape.backward(fwd.loss);
    loss_sum += tape.val(fwd.loss)(0, 0);
    for (size_t i = 0; i < grads.size(); ++i) grads[i] += tape.grad(fwd.param_ids[i]);
  }
  const double scale = loss_scale / static_cast<double>(batch.size());
  for (Mat& g : grads) g *= scale;
  if (mean_loss) *mean_loss = loss_sum / static_cast<double>(batch.size());
  return grads;
}

// --- Training ----------------------------------------------------------------

struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void init_like(const std::vector<Mat*>& params) {
    for (const Mat* p : params) {
      m.push_back(Mat::Zero(p->rows(), p->cols()));
      v.push_back(Mat::Zero(p->rows(), p->cols()));
    }
  }

  void apply(std::vector<Mat*>& params, const std::vector<Mat>& grads, double lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i].cwiseProduct(grads[i]);
      params[i]->array() -=
          lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
    }
  }
};

struct TrainResult {
  PolicyModel model;
  std::vector<double> epoch_loss;  // mean sample loss per epoch
};

namespace detail {
// Stream tags for deriving independent RNG streams from the config seed.
inline constexpr uint64_t kShuffleStream = 0xA1;
inline constexpr uint64_t kAugmentStream = 0xA2;
// Gradient reduction granularity; fixed so that the summation order is
// independent of the worker count.
inline constexpr int kGradChunk = 8;
}  // namespace detail

inline TrainResult train(const std::vector<const Trajectory*>& trajectories,
                         const PolicyConfig& config) {
  config.validate();
  if (trajectories.empty()) throw EmptyDataset("train called with no trajectories");
  for (const Trajectory* t : trajectories) {
    if (t->frame_of_reference != FrameOfReference::robot_base)
      throw NonAlignedInput("all training trajectories must be in the robot base frame");
    if (t->point_count() != config.N)
      throw NMismatch("trajectory N=" + std::to_string(t->point_count()) + " vs config N=" +
                      std::to_string(config.N));
  }

  TrainResult result;
  result.model = PolicyModel::init(config);
  std::vector<Mat*> params = result.model.params();
  AdamState adam;
  adam.init_like(params);

  const std::vector<WindowRef> windows = make_windows(trajectories, config);
  std::vector<int> order(windows.size());

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(Rng::derive(config.seed, detail::kShuffleStream, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss_sum = 0;
    for (size_t batch_start = 0; batch_start < order.size(); batch_start += config.batch_size) {
      const int bsize = static_cast<int>(
          std::min<size_t>(config.batch_size, order.size() - batch_start));
      const int chunks = (bsize + detail::kGradChunk - 1) / detail::kGradChunk;

      std::vector<std::vector<Mat>> chunk_grads(chunks);
      std::vector<double> chunk_loss(chunks, 0.0);
      parallel_chunks(chunks, [&](int c) {
        std::vector<Mat> grads;
        for (const Mat* p : params) grads.push_back(Mat::Zero(p->rows(), p->cols()));
        double loss_sum = 0;
        const int lo = c * detail::kGradChunk;
        const int hi = std::min(bsize, lo + detail::kGradChunk);
        for (int s = lo; s < hi; ++s) {
          const size_t pos = batch_start + static_cast<size_t>(s);
          const WindowRef& w = windows[order[pos]];
          Rng aug_rng(Rng::derive(Rng::derive(config.seed, detail::kAugmentStream,
                                              static_cast<uint64_t>(epoch)),
                                  pos));
          const TrainingSample sample =
              augment(materialize_window(*trajectories[w.trajectory], w.start, config), aug_rng,
                      config.augment_scale_pivot);
          ad::Tape tape;
          const Mat target = detail::target_matrix(config, sample.target_fingertips);
          const auto fwd = detail::build_forward(
              tape, result.model,
              detail::history_matrix(config, sample.input_fingertips, sample.input_objects),
              &target);
          tape.backward(fwd.loss);
          loss_sum += tape.val(fwd.loss)(0, 0);
          for (size_t i = 0; i < grads.size(); ++i) grads[i] += tape.grad(fwd.param_ids[i]);
        }
        chunk_grads[c] = std::move(grads);
        chunk_loss[c] = loss_sum;
      });

      // Ordered reduction keeps training bit-reproducible for any --threads.
      std::vector<Mat>& grads = chunk_grads[0];
      double batch_loss_sum = chunk_loss[0];
      for (int c = 1; c < chunks; ++c) {
        for (size_t i = 0; i < grads.size(); ++i) grads[i] += chunk_grads[c][i];
        batch_loss_sum += chunk_loss[c];
      }
      const double inv_b = 1.0 / static_cast<double>(bsize);
      for (Mat& g : grads) g *= inv_b;
      adam.apply(params, grads, config.learning_rate);
      epoch_loss_sum += batch_loss_sum;
    }
    result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(windows.size()));
  }
  return result;
}

inline TrainResult train(const Dataset& ds, const PolicyConfig& config) {
  return train(ds.all(), config);
}

// Mean teacher-forced MSE over every window of the given trajectories,
// without augmentation.
inline double evaluate_mse(const PolicyModel& m, const std::vector<const Trajectory*>& trajectories) {
  const auto windows = make_windows(trajectories, m.config);
  if (windows.empty()) throw EmptyDataset("evaluate_mse with no windows");
  std::vector<double> losses(windows.size(), 0.0);
  const int chunks =
      (static_cast<int>(windows.size()) + detail::kGradChunk - 1) / detail::kGradChunk;
  parallel_chunks(chunks, [&](int c) {
    const int lo = c * detail::kGradChunk;
    const int hi = std::min<int>(static_cast<int>(windows.size()), lo + detail::kGradChunk);
    for (int i = lo; i < hi; ++i) {
      const WindowRef& w = windows[i];
      const TrainingSample s = materialize_window(*trajectories[w.trajectory], w.start, m.config);
      losses[i] = mse_loss(predict(m, s.input_fingertips, s.input_objects), s.target_fingertips);
    }
  });
  double sum = 0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

// --- Serialization -----------------------------------------------------------
//
// Model file: magic "AINM", u16 version, u32 config JSON length + bytes,
// u32 matrix count, per matrix u32 rows, u32 cols, f64 data row-major,
// trailing CRC32 of all preceding bytes.

inline constexpr char kModelMagic[4] = {'A', 'I', 'N', 'M'};
inline constexpr uint16_t kModelVersion = 1;

inline void save_model(const PolicyModel& m, const std::filesystem::path& path) {
  aina::detail::ByteWriter w;
  w.buf.insert(w.buf.end(), std::begin(kModelMagic), std::end(kModelMagic));
  w.put(kModelVersion);
  w.put_string(to_json(m.config).dump());
  const auto params = m.params();
  w.put(static_cast<uint32_t>(params.size()));
  for (const Mat* p : params) {
    w.put(static_cast<uint32_t>(p->rows()));
    w.put(static_cast<uint32_t>(p->cols()));
    for (Eigen::Index r = 0; r < p->rows(); ++r)
      for (Eigen::Index c = 0; c < p->cols(); ++c) w.put((*p)(r, c));
  }
  w.put(crc32(w.buf.data(), w.buf.size()));
  aina::detail::write_file_bytes(path, w.buf.data(), w.buf.size());
}

inline PolicyModel load_model(const std::filesystem::path& path) {
  const auto bytes = aina::detail::read_file_bytes(path);
  if (bytes.size() < 10) throw TruncatedFile();
  if (std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw BadMagic();
  aina::detail::ByteReader r{bytes.data(), bytes.size(), 4};
  const uint16_t version = r.get<uint16_t>();
  if (version != kModelVersion) throw VersionMismatch("model version " + std::to_string(version));
  const uint32_t stored_crc = crc32(bytes.data(), bytes.size() - 4);
  uint32_t file_crc;
  std::memcpy(&file_crc, bytes.data() + bytes.size() - 4, 4);
  if (stored_crc != file_crc) throw ChecksumMismatch();

  PolicyConfig config;
  try {
    config = config_from_json(nlohmann::json::parse(r.get_string()));
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumMismatch(std::string("embedded config unreadable: ") + e.what());
  }
  PolicyModel m = PolicyModel::init(config);
  auto params = m.params();
  const uint32_t count = r.get<uint32_t>();
  if (count != params.size()) throw ChecksumMismatch("parameter group count");
  for (Mat* p : params) {
    const uint32_t rows = r.get<uint32_t>();
    const uint32_t cols = r.get<uint32_t>();
    if (rows != p->rows() || cols != p->cols()) throw ChecksumMismatch("parameter shape");
    for (uint32_t i = 0; i < rows; ++i)
      for (uint32_t j = 0; j < cols; ++j) (*p)(i, j) = r.get<double>();
  }
  return m;
}

}  // namespace policy
}  // namespace aina
