#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nodule/image.hpp"

namespace nodule {

// Activation block: channels x height x width, x-fastest within a channel.
struct Tensor3 {
  int ch = 0, h = 0, w = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_)
      : ch(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, 0.0) {}

  std::size_t index(int c, int y, int x) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(w) * (static_cast<std::size_t>(y) +
                                          static_cast<std::size_t>(h) * c);
  }
  double& at(int c, int y, int x) { return data[index(c, y, x)]; }
  double at(int c, int y, int x) const { return data[index(c, y, x)]; }
};

struct ConvSpec {
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

// Five conv layers (max-pool after the first, second and fifth) feeding three
// fully connected layers; the last width is the 2-class softmax head. FC1
// width doubles as the feature dimension used downstream.
struct NetworkConfig {
  int input_side = 41;
  int input_channels = 3;
  std::array<ConvSpec, 5> conv{{{8, 3, 1, 1}, {16, 3, 1, 1}, {16, 3, 1, 1}, {16, 3, 1, 1}, {16, 3, 1, 1}}};
  std::array<int, 3> pool_after{1, 2, 5};  // 1-indexed conv layers
  std::array<int, 3> fc{64, 32, 2};

  int feature_dim() const { return fc[0]; }
  void validate() const;  // throws DataError

  // Side length of each conv stage output (after optional pooling),
  // index 0..4; validates that every stage stays non-empty.
  std::array<int, 5> stage_sides() const;
  int flat_dim() const;  // flattened size entering FC1
};

struct ConvLayer {
  int in_channels = 0, out_channels = 0, kernel = 0, stride = 1, pad = 0;
  std::vector<double> w;  // [out][in][ky][kx]
  std::vector<double> b;  // [out]

  std::size_t windex(int oc, int ic, int ky, int kx) const {
    return static_cast<std::size_t>(kx) +
           static_cast<std::size_t>(kernel) *
               (static_cast<std::size_t>(ky) +
                static_cast<std::size_t>(kernel) *
                    (static_cast<std::size_t>(ic) +
                     static_cast<std::size_t>(in_channels) * oc));
  }
};

struct FcLayer {
  int in_dim = 0, out_dim = 0;
  std::vector<double> w;  // [out][in] row-major
  std::vector<double> b;  // [out]
};

struct NetworkParams {
  NetworkConfig cfg;
  std::array<ConvLayer, 5> conv;
  std::array<FcLayer, 3> fc;
};

// He-initialized weights (N(0, 2/fan_in)), zero biases, single draw stream in
// declaration order.
NetworkParams make_params(const NetworkConfig& cfg, std::uint64_t seed);
NetworkParams zero_params(const NetworkConfig& cfg);

// Gradient containers share the parameter layout.
void add_scaled(NetworkParams& acc, const NetworkParams& g, double scale);

struct ForwardCache {
  Tensor3 input;
  std::array<Tensor3, 5> conv_pre;    // pre-ReLU conv outputs
  std::array<Tensor3, 5> stage_out;   // post ReLU (+pool) outputs
  std::array<std::vector<std::size_t>, 5> pool_argmax;  // flat index into the ReLU map
  std::array<std::vector<double>, 3> fc_in;
  std::array<std::vector<double>, 3> fc_pre;  // fc_pre[2] == logits
};

// Full forward pass; cache may be null when only logits are needed.
std::array<double, 2> forward(const NetworkParams& params, const ProjectionTensor& input,
                              ForwardCache* cache = nullptr);

std::array<double, 2> softmax(const std::array<double, 2>& logits);

struct LossGrad {
  double loss;
  std::array<double, 2> dlogits;
};
LossGrad softmax_cross_entropy(const std::array<double, 2>& logits, int label);

// Reverse-mode gradients of the loss w.r.t. every parameter, given the cache
// of the matching forward call.
NetworkParams backward(const NetworkParams& params, const ForwardCache& cache,
                       const std::array<double, 2>& dlogits);

using FeatureVector = std::vector<double>;

// Post-ReLU activations of FC1.
FeatureVector extract_features(const NetworkParams& params, const ProjectionTensor& input);

struct TrainSample {
  const ProjectionTensor* tensor = nullptr;
  int label = 0;  // 0 benign, 1 malignant
};

struct TrainConfig {
  int iterations = 2000;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;
  int threads = 1;  // per-batch example parallelism; reduction order is fixed

  void validate() const;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> loss_curve;          // mean batch loss per iteration
  std::vector<std::size_t> val_indices;    // indices into `data` held out
};

// The validation carve-out used by train(): a seeded shuffle of [0, n) whose
// first floor(fraction * n) indices are held out.
std::vector<std::size_t> validation_split(std::size_t n, double fraction, std::uint64_t seed);

// Minibatch SGD with momentum. The validation split is carved from `data` by
// a seeded shuffle before training and never sampled into batches.
TrainResult train(const std::vector<TrainSample>& data, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg);

// Checkpoint: "NNC1" | config fields u32le | tensors f64le in declaration order.
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

void export_loss_csv(const std::vector<double>& loss_curve, const std::string& path);

}  // namespace nodule
