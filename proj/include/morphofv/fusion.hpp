#pragma once

// Attention-fused classification head.
//
//   visual:  att = sigmoid(conv1x1(V_f)),  V_fa = V_f + V_f * att,
//            v = vis_proj(avgpool(V_fa))                       (pooled input: v = vis_proj(x))
//   text:    t = txt_proj(FV)
//            s = tanh(att_vis v + att_txt t),  W_a = softmax(s),  T_fa = W_a * t
//   head:    F = [v, T_fa],  p = softmax(classifier F)
//
// Gradients are derived by hand; tests compare every tensor with central
// finite differences.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "morphofv/error.hpp"
#include "morphofv/rng.hpp"

namespace morphofv {

struct FusionConfig {
  Eigen::Index visual_dim = 2048;  // Dv, also the channel count of spatial maps
  Eigen::Index visual_hidden = 1024;
  Eigen::Index text_dim = 38400;   // 2 * d * K
  Eigen::Index text_hidden = 512;
  Eigen::Index num_classes = 2;

  Eigen::Index fused_dim() const { return visual_hidden + text_hidden; }

  void validate() const {
    if (visual_dim < 1 || visual_hidden < 1 || text_dim < 1 || text_hidden < 1 || num_classes < 1)
      throw PreconditionError("FusionConfig: all dimensions must be positive");
  }
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct Linear {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return weight * x + bias; }

  static Linear zeros(Eigen::Index out, Eigen::Index in) {
    return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)};
  }
};

struct FusionParams {
  FusionConfig config;
  Linear att_conv;    // 1 x Dv, the 1x1 convolution producing one attention channel
  Linear vis_proj;    // visual_hidden x Dv
  Linear txt_proj;    // text_hidden x text_dim
  Linear att_vis;     // text_hidden x visual_hidden
  Linear att_txt;     // text_hidden x text_hidden
  Linear classifier;  // num_classes x fused_dim

  static constexpr std::size_t kLayerCount = 6;
  static constexpr std::array<const char*, kLayerCount> kLayerNames = {
      "att_conv", "vis_proj", "txt_proj", "att_vis", "att_txt", "classifier"};

  std::array<Linear*, kLayerCount> layers() {
    return {&att_conv, &vis_proj, &txt_proj, &att_vis, &att_txt, &classifier};
  }
  std::array<const Linear*, kLayerCount> layers() const {
    return {&att_conv, &vis_proj, &txt_proj, &att_vis, &att_txt, &classifier};
  }

  static FusionParams zeros(const FusionConfig& c) {
    c.validate();
    FusionParams p;
    p.config = c;
    p.att_conv = Linear::zeros(1, c.visual_dim);
    p.vis_proj = Linear::zeros(c.visual_hidden, c.visual_dim);
    p.txt_proj = Linear::zeros(c.text_hidden, c.text_dim);
    p.att_vis = Linear::zeros(c.text_hidden, c.visual_hidden);
    p.att_txt = Linear::zeros(c.text_hidden, c.text_hidden);
    p.classifier = Linear::zeros(c.num_classes, c.fused_dim());
    return p;
  }

  void validate() const {
    config.validate();
    const FusionParams ref = zeros(config);
    const auto mine = layers();
    const auto want = ref.layers();
    for (std::size_t i = 0; i < kLayerCount; ++i) {
      if (mine[i]->weight.rows() != want[i]->weight.rows() || mine[i]->weight.cols() != want[i]->weight.cols() ||
          mine[i]->bias.size() != want[i]->bias.size())
        throw DimensionError(std::string("FusionParams: layer ") + kLayerNames[i] + " has the wrong shape");
      if (!mine[i]->weight.allFinite() || !mine[i]->bias.allFinite())
        throw FormatError(std::string("FusionParams: layer ") + kLayerNames[i] + " is not finite");
    }
  }
};

// Glorot-uniform weights, zero biases. Weights are drawn layer by layer in
// row-major order.
inline FusionParams init_params(const FusionConfig& config, std::uint64_t seed) {
  FusionParams p = FusionParams::zeros(config);
  Rng rng(seed);
  for (Linear* layer : p.layers()) {
    const double a = std::sqrt(6.0 / static_cast<double>(layer->weight.rows() + layer->weight.cols()));
    for (Eigen::Index r = 0; r < layer->weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer->weight.cols(); ++c) layer->weight(r, c) = rng.uniform(-a, a);
  }
  return p;
}

// Either a pooled feature vector or a C x H x W map stored as C x (H*W).
class VisualInput {
 public:
  static VisualInput pooled(Eigen::VectorXd v) {
    VisualInput in;
    in.data_ = std::move(v);
    return in;
  }

  // `values` holds C*H*W entries in channel-major (C, H, W) order.
  static VisualInput spatial(Eigen::Index channels, Eigen::Index height, Eigen::Index width,
                             std::span<const double> values) {
    if (channels < 1 || height < 1 || width < 1 ||
        static_cast<Eigen::Index>(values.size()) != channels * height * width)
      throw DimensionError("VisualInput: map shape does not match value count");
    VisualInput in;
    in.spatial_ = true;
    in.height_ = height;
    in.width_ = width;
    in.data_ = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        values.data(), channels, height * width);
    return in;
  }

  bool is_spatial() const { return spatial_; }
  Eigen::Index channels() const { return data_.rows(); }
  Eigen::Index height() const { return height_; }
  Eigen::Index width() const { return width_; }
  // Pooled: Dv x 1. Spatial: C x (H*W).
  const Eigen::MatrixXd& data() const { return data_; }

 private:
  Eigen::MatrixXd data_;
  Eigen::Index height_ = 1;
  Eigen::Index width_ = 1;
  bool spatial_ = false;
};

struct Sample {
  std::string id;
  VisualInput visual;
  Eigen::VectorXd text;  // Fisher vector
  int label = 0;
};

struct LabeledDataset {
  std::vector<std::string> classes;
  std::vector<Sample> samples;
};

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
  Eigen::VectorXd attention;  // H*W sigmoid mask (spatial input only)
  Eigen::VectorXd pooled;     // attended, averaged visual feature (Dv)
  Eigen::VectorXd v;          // V_fa after projection
  Eigen::VectorXd t;          // projected text feature
  Eigen::VectorXd s;          // tanh scores
  Eigen::VectorXd weights;    // W_a
  Eigen::VectorXd t_att;      // T_fa
  Eigen::VectorXd fused;      // F
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;
};

namespace detail {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline Eigen::VectorXd softmax(const Eigen::VectorXd& x) {
  // Scalar exp: Eigen's vectorized exp clamps large negative arguments and
  // returns a denormal instead of 0.
  const double m = x.maxCoeff();
  const Eigen::ArrayXd e = x.array().unaryExpr([m](double v) { return std::exp(v - m); });
  return (e / e.sum()).matrix();
}

inline void check_visual(const VisualInput& in, const FusionConfig& c) {
  if (in.channels() != c.visual_dim)
    throw DimensionError("visual input has " + std::to_string(in.channels()) + " channels, expected " +
                         std::to_string(c.visual_dim));
}

// Attended and pooled visual feature; fills trace.attention for maps.
inline Eigen::VectorXd attend_and_pool(const VisualInput& in, const FusionParams& p, ForwardTrace* trace) {
  check_visual(in, p.config);
  if (!in.is_spatial()) return in.data().col(0);
  const Eigen::MatrixXd& map = in.data();
  const Eigen::Index pixels = map.cols();
  Eigen::VectorXd att(pixels);
  const Eigen::RowVectorXd pre = p.att_conv.weight * map;
  for (Eigen::Index i = 0; i < pixels; ++i) att[i] = sigmoid(pre[i] + p.att_conv.bias[0]);
  if (trace) trace->attention = att;
  return (map * (1.0 + att.array()).matrix()) / static_cast<double>(pixels);
}

}  // namespace detail

// V_fa: attention over the map (maps only), average pool, projection.
inline Eigen::VectorXd visual_attend(const VisualInput& in, const FusionParams& p) {
  return p.vis_proj(detail::attend_and_pool(in, p, nullptr));
}

// W_a over the text_hidden coordinates.
inline Eigen::VectorXd attention_weights(const Eigen::VectorXd& v, const Eigen::VectorXd& t,
                                         const FusionParams& p) {
  if (v.size() != p.config.visual_hidden || t.size() != p.config.text_hidden)
    throw DimensionError("textual_attend: feature sizes do not match config");
  const Eigen::VectorXd s = (p.att_vis(v) + p.att_txt(t)).array().tanh().matrix();
  return detail::softmax(s);
}

// T_fa = W_a * t.
inline Eigen::VectorXd textual_attend(const Eigen::VectorXd& v, const Eigen::VectorXd& t,
                                      const FusionParams& p) {
  return attention_weights(v, t, p).cwiseProduct(t);
}

inline ForwardTrace forward_trace(const Sample& sample, const FusionParams& p) {
  const FusionConfig& c = p.config;
  if (sample.text.size() != c.text_dim)
    throw DimensionError("text feature has length " + std::to_string(sample.text.size()) + ", expected " +
                         std::to_string(c.text_dim));
  ForwardTrace tr;
  tr.pooled = detail::attend_and_pool(sample.visual, p, &tr);
  tr.v = p.vis_proj(tr.pooled);
  tr.t = p.txt_proj(sample.text);
  tr.s = (p.att_vis(tr.v) + p.att_txt(tr.t)).array().tanh().matrix();
  tr.weights = detail::softmax(tr.s);
  tr.t_att = tr.weights.cwiseProduct(tr.t);
  tr.fused.resize(c.fused_dim());
  tr.fused << tr.v, tr.t_att;
  tr.logits = p.classifier(tr.fused);
  tr.probs = detail::softmax(tr.logits);
  return tr;
}

inline Eigen::VectorXd forward(const Sample& sample, const FusionParams& p) {
  return forward_trace(sample, p).probs;
}

inline constexpr double kLossEpsilon = 1e-12;

// -log(probs[label]), with probs[label] clamped to kLossEpsilon.
inline double cross_entropy(const Eigen::VectorXd& probs, int label) {
  if (label < 0 || label >= probs.size()) throw PreconditionError("cross_entropy: label out of range");
  return -std::log(std::max(probs[label], kLossEpsilon));
}

struct BatchGradient {
  double loss = 0.0;  // mean cross-entropy
  std::size_t correct = 0;
  FusionParams grad;
};

// Mean cross-entropy over the batch and its exact gradient.
inline BatchGradient backward(std::span<const Sample* const> batch, const FusionParams& p) {
  if (batch.empty()) throw PreconditionError("backward: empty batch");
  const FusionConfig& c = p.config;
  BatchGradient out;
  out.grad = FusionParams::zeros(c);
  FusionParams& g = out.grad;
  const double scale = 1.0 / static_cast<double>(batch.size());

  for (const Sample* sample : batch) {
    if (sample->label < 0 || sample->label >= c.num_classes)
      throw PreconditionError("backward: label out of range for sample " + sample->id);
    const ForwardTrace tr = forward_trace(*sample, p);
    out.loss += cross_entropy(tr.probs, sample->label) * scale;
    Eigen::Index predicted = 0;
    tr.probs.maxCoeff(&predicted);
    if (predicted == sample->label) ++out.correct;

    // Inside the clamp the loss is flat.
    if (tr.probs[sample->label] < kLossEpsilon) continue;
    Eigen::VectorXd d_logits = tr.probs;
    d_logits[sample->label] -= 1.0;
    d_logits *= scale;

    g.classifier.weight.noalias() += d_logits * tr.fused.transpose();
    g.classifier.bias += d_logits;
    const Eigen::VectorXd d_fused = p.classifier.weight.transpose() * d_logits;
    Eigen::VectorXd d_v = d_fused.head(c.visual_hidden);
    const Eigen::VectorXd d_tatt = d_fused.tail(c.text_hidden);

    const Eigen::VectorXd d_w = d_tatt.cwiseProduct(tr.t);
    Eigen::VectorXd d_t = d_tatt.cwiseProduct(tr.weights);
    const Eigen::VectorXd d_s = tr.weights.cwiseProduct((d_w.array() - d_w.dot(tr.weights)).matrix());
    const Eigen::VectorXd d_pre = d_s.cwiseProduct((1.0 - tr.s.array().square()).matrix());

    g.att_vis.weight.noalias() += d_pre * tr.v.transpose();
    g.att_vis.bias += d_pre;
    g.att_txt.weight.noalias() += d_pre * tr.t.transpose();
    g.att_txt.bias += d_pre;
    d_v.noalias() += p.att_vis.weight.transpose() * d_pre;
    d_t.noalias() += p.att_txt.weight.transpose() * d_pre;

    g.txt_proj.weight.noalias() += d_t * sample->text.transpose();
    g.txt_proj.bias += d_t;

    g.vis_proj.weight.noalias() += d_v * tr.pooled.transpose();
    g.vis_proj.bias += d_v;

    if (sample->visual.is_spatial()) {
      const Eigen::MatrixXd& map = sample->visual.data();
      const double inv_pixels = 1.0 / static_cast<double>(map.cols());
      const Eigen::VectorXd d_pooled = p.vis_proj.weight.transpose() * d_v;
      const Eigen::RowVectorXd d_att = (d_pooled.transpose() * map) * inv_pixels;
      const Eigen::RowVectorXd d_att_pre =
          d_att.array() * (tr.attention.array() * (1.0 - tr.attention.array())).transpose();
      g.att_conv.weight.noalias() += d_att_pre * map.transpose();
      g.att_conv.bias[0] += d_att_pre.sum();
    }
  }
  return out;
}

inline BatchGradient backward(std::span<const Sample> batch, const FusionParams& p) {
  std::vector<const Sample*> ptrs;
  ptrs.reserve(batch.size());
  for (const Sample& s : batch) ptrs.push_back(&s);
  return backward(std::span<const Sample* const>(ptrs), p);
}

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 0.001;
  double momentum = 0.9;
  double lr_decay = 0.1;
  int lr_decay_every = 10;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || lr_decay_every < 1)
      throw PreconditionError("TrainConfig: epochs, batch_size and lr_decay_every must be positive");
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0))
      throw PreconditionError("TrainConfig: learning_rate must be >= 0 and momentum in [0, 1)");
    if (!(lr_decay > 0.0 && lr_decay < 1.0)) throw PreconditionError("TrainConfig: lr_decay must lie in (0, 1)");
  }
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;      // mean over the epoch's samples, measured before each update
  double accuracy = 0.0;  // same pass
  double learning_rate = 0.0;
};

struct TrainResult {
  FusionParams params;
  std::vector<EpochMetrics> history;
};

// Mini-batch SGD with momentum (buf = mu*buf + g; p -= lr*buf) and a step
// decay of the learning rate.
inline TrainResult train(const LabeledDataset& data, const TrainConfig& config, FusionParams params) {
  config.validate();
  params.validate();
  if (data.samples.empty()) throw PreconditionError("train: empty dataset");

  TrainResult result;
  FusionParams velocity = FusionParams::zeros(params.config);
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<const Sample*> batch;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.learning_rate * std::pow(config.lr_decay, epoch / config.lr_decay_every);
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&data.samples[order[i]]);
      BatchGradient step = backward(std::span<const Sample* const>(batch), params);
      if (!std::isfinite(step.loss))
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start));
      loss_sum += step.loss * static_cast<double>(batch.size());
      correct += step.correct;
      auto dst = params.layers();
      auto vel = velocity.layers();
      const auto grad = step.grad.layers();
      for (std::size_t l = 0; l < FusionParams::kLayerCount; ++l) {
        vel[l]->weight = config.momentum * vel[l]->weight + grad[l]->weight;
        vel[l]->bias = config.momentum * vel[l]->bias + grad[l]->bias;
        dst[l]->weight -= lr * vel[l]->weight;
        dst[l]->bias -= lr * vel[l]->bias;
      }
    }
    const double n = static_cast<double>(data.samples.size());
    result.history.push_back({epoch + 1, loss_sum / n, static_cast<double>(correct) / n, lr});
  }
  result.params = std::move(params);
  return result;
}

inline TrainResult train(const LabeledDataset& data, const TrainConfig& config, const FusionConfig& net,
                         std::uint64_t init_seed) {
  return train(data, config, init_params(net, init_seed));
}

}  // namespace morphofv
