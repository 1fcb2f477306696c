#include "nodule/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include "nodule/error.hpp"
#include "nodule/rng.hpp"

namespace nodule {

namespace {

int conv_out_side(int in, const ConvSpec& s) {
  return (in + 2 * s.pad - s.kernel) / s.stride + 1;
}

bool pooled(const NetworkConfig& cfg, int layer_1indexed) {
  return std::find(cfg.pool_after.begin(), cfg.pool_after.end(), layer_1indexed) !=
         cfg.pool_after.end();
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_side < 1 || input_channels < 1) throw DataError("cnn: bad input shape");
  if (pool_after != std::array<int, 3>{1, 2, 5}) {
    throw DataError("cnn: pooling must follow conv layers 1, 2 and 5");
  }
  if (fc[2] != 2) throw DataError("cnn: final FC width must be 2 (softmax head)");
  for (int w : fc) {
    if (w < 1) throw DataError("cnn: FC widths must be positive");
  }
  for (const auto& c : conv) {
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1 || c.pad < 0) {
      throw DataError("cnn: bad conv spec");
    }
  }
  stage_sides();  // throws if any stage collapses
}

std::array<int, 5> NetworkConfig::stage_sides() const {
  std::array<int, 5> sides{};
  int side = input_side;
  for (int i = 0; i < 5; ++i) {
    side = conv_out_side(side, conv[i]);
    if (side < 1) {
      throw DataError("cnn: conv layer " + std::to_string(i + 1) + " output is empty");
    }
    if (pooled(*this, i + 1)) {
      side /= 2;
      if (side < 1) {
        throw DataError("cnn: pool after layer " + std::to_string(i + 1) + " output is empty");
      }
    }
    sides[i] = side;
  }
  return sides;
}

int NetworkConfig::flat_dim() const {
  return conv[4].out_channels * stage_sides()[4] * stage_sides()[4];
}

NetworkParams zero_params(const NetworkConfig& cfg) {
  cfg.validate();
  NetworkParams p;
  p.cfg = cfg;
  int in_ch = cfg.input_channels;
  for (int i = 0; i < 5; ++i) {
    ConvLayer& l = p.conv[i];
    l.in_channels = in_ch;
    l.out_channels = cfg.conv[i].out_channels;
    l.kernel = cfg.conv[i].kernel;
    l.stride = cfg.conv[i].stride;
    l.pad = cfg.conv[i].pad;
    l.w.assign(static_cast<std::size_t>(l.out_channels) * l.in_channels * l.kernel * l.kernel, 0.0);
    l.b.assign(static_cast<std::size_t>(l.out_channels), 0.0);
    in_ch = l.out_channels;
  }
  int in_dim = cfg.flat_dim();
  for (int i = 0; i < 3; ++i) {
    FcLayer& l = p.fc[i];
    l.in_dim = in_dim;
    l.out_dim = cfg.fc[i];
    l.w.assign(static_cast<std::size_t>(l.out_dim) * l.in_dim, 0.0);
    l.b.assign(static_cast<std::size_t>(l.out_dim), 0.0);
    in_dim = l.out_dim;
  }
  return p;
}

NetworkParams make_params(const NetworkConfig& cfg, std::uint64_t seed) {
  NetworkParams p = zero_params(cfg);
  Rng rng(seed);
  for (auto& l : p.conv) {
    const double sigma = std::sqrt(2.0 / (l.in_channels * l.kernel * l.kernel));
    for (auto& v : l.w) v = rng.normal(0.0, sigma);
  }
  for (auto& l : p.fc) {
    const double sigma = std::sqrt(2.0 / l.in_dim);
    for (auto& v : l.w) v = rng.normal(0.0, sigma);
  }
  return p;
}

void add_scaled(NetworkParams& acc, const NetworkParams& g, double scale) {
  for (int i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < acc.conv[i].w.size(); ++k) acc.conv[i].w[k] += scale * g.conv[i].w[k];
    for (std::size_t k = 0; k < acc.conv[i].b.size(); ++k) acc.conv[i].b[k] += scale * g.conv[i].b[k];
  }
  for (int i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < acc.fc[i].w.size(); ++k) acc.fc[i].w[k] += scale * g.fc[i].w[k];
    for (std::size_t k = 0; k < acc.fc[i].b.size(); ++k) acc.fc[i].b[k] += scale * g.fc[i].b[k];
  }
}

namespace {

void scale_params(NetworkParams& p, double s) {
  for (auto& l : p.conv) {
    for (auto& v : l.w) v *= s;
    for (auto& v : l.b) v *= s;
  }
  for (auto& l : p.fc) {
    for (auto& v : l.w) v *= s;
    for (auto& v : l.b) v *= s;
  }
}

}  // namespace

namespace {

Tensor3 conv_forward(const Tensor3& in, const ConvLayer& l) {
  const int out_h = (in.h + 2 * l.pad - l.kernel) / l.stride + 1;
  const int out_w = (in.w + 2 * l.pad - l.kernel) / l.stride + 1;
  Tensor3 out(l.out_channels, out_h, out_w);
  for (int oc = 0; oc < l.out_channels; ++oc) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        double acc = l.b[oc];
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int ky = 0; ky < l.kernel; ++ky) {
            const int iy = oy * l.stride - l.pad + ky;
            if (iy < 0 || iy >= in.h) continue;
            const double* wrow = &l.w[l.windex(oc, ic, ky, 0)];
            const double* irow = &in.data[in.index(ic, iy, 0)];
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int ix = ox * l.stride - l.pad + kx;
              if (ix < 0 || ix >= in.w) continue;
              acc += wrow[kx] * irow[ix];
            }
          }
        }
        out.at(oc, oy, ox) = acc;
      }
    }
  }
  return out;
}

void conv_backward(const Tensor3& in, const ConvLayer& l, const Tensor3& dout,
                   ConvLayer& grad, Tensor3& din) {
  din = Tensor3(in.ch, in.h, in.w);
  for (int oc = 0; oc < l.out_channels; ++oc) {
    for (int oy = 0; oy < dout.h; ++oy) {
      for (int ox = 0; ox < dout.w; ++ox) {
        const double g = dout.at(oc, oy, ox);
        if (g == 0.0) continue;
        grad.b[oc] += g;
        for (int ic = 0; ic < l.in_channels; ++ic) {
          for (int ky = 0; ky < l.kernel; ++ky) {
            const int iy = oy * l.stride - l.pad + ky;
            if (iy < 0 || iy >= in.h) continue;
            double* gwrow = &grad.w[l.windex(oc, ic, ky, 0)];
            const double* wrow = &l.w[l.windex(oc, ic, ky, 0)];
            const double* irow = &in.data[in.index(ic, iy, 0)];
            double* drow = &din.data[din.index(ic, iy, 0)];
            for (int kx = 0; kx < l.kernel; ++kx) {
              const int ix = ox * l.stride - l.pad + kx;
              if (ix < 0 || ix >= in.w) continue;
              gwrow[kx] += g * irow[ix];
              drow[ix] += g * wrow[kx];
            }
          }
        }
      }
    }
  }
}

Tensor3 relu(const Tensor3& pre) {
  Tensor3 out = pre;
  for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

// 2x2 max pool, stride 2; ties go to the first element in row-major scan.
Tensor3 maxpool_forward(const Tensor3& in, std::vector<std::size_t>& argmax) {
  const int oh = in.h / 2, ow = in.w / 2;
  Tensor3 out(in.ch, oh, ow);
  argmax.assign(out.data.size(), 0);
  for (int c = 0; c < in.ch; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in.index(c, oy * 2 + dy, ox * 2 + dx);
            if (in.data[idx] > best) {
              best = in.data[idx];
              best_idx = idx;
            }
          }
        }
        out.at(c, oy, ox) = best;
        argmax[out.index(c, oy, ox)] = best_idx;
      }
    }
  }
  return out;
}

Tensor3 maxpool_backward(const Tensor3& in_shape, const std::vector<std::size_t>& argmax,
                         const Tensor3& dout) {
  Tensor3 din(in_shape.ch, in_shape.h, in_shape.w);
  for (std::size_t i = 0; i < dout.data.size(); ++i) {
    din.data[argmax[i]] += dout.data[i];
  }
  return din;
}

std::vector<double> fc_forward(const std::vector<double>& in, const FcLayer& l) {
  std::vector<double> out(static_cast<std::size_t>(l.out_dim));
  for (int o = 0; o < l.out_dim; ++o) {
    const double* wrow = &l.w[static_cast<std::size_t>(o) * l.in_dim];
    double acc = l.b[o];
    for (int i = 0; i < l.in_dim; ++i) acc += wrow[i] * in[i];
    out[o] = acc;
  }
  return out;
}

Tensor3 tensor_from_projection(const ProjectionTensor& t) {
  Tensor3 in(3, t.side, t.side);
  for (int c = 0; c < 3; ++c) {
    std::copy(t.channels[c].pix.begin(), t.channels[c].pix.end(),
              in.data.begin() + in.index(c, 0, 0));
  }
  return in;
}

}  // namespace

std::array<double, 2> forward(const NetworkParams& params, const ProjectionTensor& input,
                              ForwardCache* cache) {
  const NetworkConfig& cfg = params.cfg;
  if (input.side != cfg.input_side || cfg.input_channels != 3) {
    throw DataError("cnn: input side " + std::to_string(input.side) +
                    " does not match network input " + std::to_string(cfg.input_side));
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.input = tensor_from_projection(input);

  const Tensor3* cur = &c.input;
  for (int i = 0; i < 5; ++i) {
    c.conv_pre[i] = conv_forward(*cur, params.conv[i]);
    Tensor3 post = relu(c.conv_pre[i]);
    if (pooled(cfg, i + 1)) {
      c.stage_out[i] = maxpool_forward(post, c.pool_argmax[i]);
    } else {
      c.stage_out[i] = std::move(post);
      c.pool_argmax[i].clear();
    }
    cur = &c.stage_out[i];
  }

  std::vector<double> flat = cur->data;
  for (int i = 0; i < 3; ++i) {
    c.fc_in[i] = std::move(flat);
    c.fc_pre[i] = fc_forward(c.fc_in[i], params.fc[i]);
    if (i < 2) {
      flat = c.fc_pre[i];
      for (auto& v : flat) v = v > 0.0 ? v : 0.0;
    }
  }
  return {c.fc_pre[2][0], c.fc_pre[2][1]};
}

std::array<double, 2> softmax(const std::array<double, 2>& logits) {
  const double shift = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - shift);
  const double e1 = std::exp(logits[1] - shift);
  const double z = e0 + e1;
  return {e0 / z, e1 / z};
}

LossGrad softmax_cross_entropy(const std::array<double, 2>& logits, int label) {
  if (label != 0 && label != 1) throw DataError("label must be 0 or 1");
  const double shift = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - shift);
  const double e1 = std::exp(logits[1] - shift);
  const double logz = std::log(e0 + e1);
  LossGrad out;
  out.loss = logz - (logits[label] - shift);
  const double z = e0 + e1;
  out.dlogits = {e0 / z, e1 / z};
  out.dlogits[label] -= 1.0;
  return out;
}

NetworkParams backward(const NetworkParams& params, const ForwardCache& cache,
                       const std::array<double, 2>& dlogits) {
  NetworkParams grad = zero_params(params.cfg);

  std::vector<double> dout{dlogits[0], dlogits[1]};
  for (int i = 2; i >= 0; --i) {
    const FcLayer& l = params.fc[i];
    FcLayer& g = grad.fc[i];
    const std::vector<double>& in = cache.fc_in[i];
    std::vector<double> din(static_cast<std::size_t>(l.in_dim), 0.0);
    for (int o = 0; o < l.out_dim; ++o) {
      const double go = dout[o];
      g.b[o] += go;
      if (go == 0.0) continue;
      const double* wrow = &l.w[static_cast<std::size_t>(o) * l.in_dim];
      double* gwrow = &g.w[static_cast<std::size_t>(o) * l.in_dim];
      for (int k = 0; k < l.in_dim; ++k) {
        gwrow[k] += go * in[k];
        din[k] += go * wrow[k];
      }
    }
    if (i > 0) {
      // through the ReLU applied to fc_pre[i-1]
      for (int k = 0; k < l.in_dim; ++k) {
        if (cache.fc_pre[i - 1][k] <= 0.0) din[k] = 0.0;
      }
    }
    dout = std::move(din);
  }

  // unflatten into the last conv stage shape
  const Tensor3& last = cache.stage_out[4];
  Tensor3 dstage(last.ch, last.h, last.w);
  dstage.data = dout;

  for (int i = 4; i >= 0; --i) {
    Tensor3 dpost;
    if (pooled(params.cfg, i + 1)) {
      Tensor3 relu_shape = cache.conv_pre[i];  // same dims as the relu map
      dpost = maxpool_backward(relu_shape, cache.pool_argmax[i], dstage);
    } else {
      dpost = std::move(dstage);
    }
    // ReLU mask from the stored pre-activations
    for (std::size_t k = 0; k < dpost.data.size(); ++k) {
      if (cache.conv_pre[i].data[k] <= 0.0) dpost.data[k] = 0.0;
    }
    const Tensor3& in = i == 0 ? cache.input : cache.stage_out[i - 1];
    Tensor3 din;
    conv_backward(in, params.conv[i], dpost, grad.conv[i], din);
    dstage = std::move(din);
  }
  return grad;
}

FeatureVector extract_features(const NetworkParams& params, const ProjectionTensor& input) {
  ForwardCache cache;
  forward(params, input, &cache);
  FeatureVector f = cache.fc_pre[0];
  for (auto& v : f) v = v > 0.0 ? v : 0.0;
  return f;
}

std::vector<std::size_t> validation_split(std::size_t n, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x76616c));  // "val"
  rng.shuffle(order);
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  order.resize(n_val);
  return order;
}

void TrainConfig::validate() const {
  if (iterations < 1 || batch_size < 1) throw DataError("train: iterations and batch size must be positive");
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0)) throw DataError("train: bad optimizer settings");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw DataError("train: validation fraction must be in (0,1)");
  }
  if (threads < 0) throw DataError("train: threads must be >= 0");
}

TrainResult train(const std::vector<TrainSample>& data, const NetworkConfig& net_cfg,
                  const TrainConfig& train_cfg) {
  net_cfg.validate();
  train_cfg.validate();
  if (data.empty()) throw DataError("train: empty data");
  std::array<std::size_t, 2> class_count{0, 0};
  for (const auto& s : data) {
    if (s.label != 0 && s.label != 1) throw DataError("train: labels must be 0 or 1");
    ++class_count[static_cast<std::size_t>(s.label)];
  }
  if (class_count[0] < 2 || class_count[1] < 2) {
    throw DataError("train: need at least 2 samples per class (got " +
                    std::to_string(class_count[0]) + "/" + std::to_string(class_count[1]) + ")");
  }

  TrainResult result;
  result.val_indices = validation_split(data.size(), train_cfg.validation_fraction, train_cfg.seed);
  std::vector<bool> held_out(data.size(), false);
  for (std::size_t i : result.val_indices) held_out[i] = true;
  std::vector<std::size_t> pool;
  pool.reserve(data.size() - result.val_indices.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!held_out[i]) pool.push_back(i);
  }
  if (pool.empty()) throw DataError("train: validation split leaves no training data");

  result.params = make_params(net_cfg, derive_seed(train_cfg.seed, 0x696e6974));
  NetworkParams velocity = zero_params(net_cfg);
  result.loss_curve.reserve(static_cast<std::size_t>(train_cfg.iterations));

  const int n_threads = std::max(1, train_cfg.threads == 0
                                        ? static_cast<int>(std::thread::hardware_concurrency())
                                        : train_cfg.threads);
  Rng batch_rng(derive_seed(train_cfg.seed, 0x6261746368));

  std::vector<NetworkParams> slot_grads;
  std::vector<double> slot_loss(static_cast<std::size_t>(train_cfg.batch_size));
  for (int i = 0; i < train_cfg.batch_size; ++i) slot_grads.push_back(zero_params(net_cfg));

  for (int it = 0; it < train_cfg.iterations; ++it) {
    std::vector<std::size_t> batch(static_cast<std::size_t>(train_cfg.batch_size));
    for (auto& idx : batch) idx = pool[batch_rng.uniform_int(pool.size())];

    auto worker = [&](int t) {
      for (int k = t; k < train_cfg.batch_size; k += n_threads) {
        const TrainSample& s = data[batch[static_cast<std::size_t>(k)]];
        ForwardCache cache;
        const auto logits = forward(result.params, *s.tensor, &cache);
        const LossGrad lg = softmax_cross_entropy(logits, s.label);
        slot_loss[static_cast<std::size_t>(k)] = lg.loss;
        slot_grads[static_cast<std::size_t>(k)] = backward(result.params, cache, lg.dlogits);
      }
    };
    if (n_threads == 1) {
      worker(0);
    } else {
      std::vector<std::thread> threads;
      threads.reserve(static_cast<std::size_t>(n_threads));
      for (int t = 0; t < n_threads; ++t) threads.emplace_back(worker, t);
      for (auto& th : threads) th.join();
    }

    // fixed-order reduction keeps results independent of thread scheduling
    NetworkParams batch_grad = zero_params(net_cfg);
    double loss = 0.0;
    for (int k = 0; k < train_cfg.batch_size; ++k) {
      add_scaled(batch_grad, slot_grads[static_cast<std::size_t>(k)], 1.0);
      loss += slot_loss[static_cast<std::size_t>(k)];
    }
    const double inv_b = 1.0 / train_cfg.batch_size;
    result.loss_curve.push_back(loss * inv_b);

    scale_params(velocity, train_cfg.momentum);
    add_scaled(velocity, batch_grad, inv_b);  // v = momentum*v + mean grad
    add_scaled(result.params, velocity, -train_cfg.learning_rate);
  }
  return result;
}

namespace {

void append_u32le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

void append_f64le(std::string& out, double d) {
  std::uint64_t u;
  std::memcpy(&u, &d, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

std::uint32_t take_u32le(const std::string& buf, std::size_t& pos, const std::string& path) {
  if (pos + 4 > buf.size()) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, pos, "checkpoint truncated in " + path);
  }
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  pos += 4;
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

double take_f64le(const std::string& buf, std::size_t& pos, const std::string& path) {
  if (pos + 8 > buf.size()) {
    throw VolumeIoError(VolumeIoError::Kind::Truncated, pos, "checkpoint truncated in " + path);
  }
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) {
    u |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
  }
  pos += 8;
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

}  // namespace

void save_checkpoint(const NetworkParams& params, const std::string& path) {
  std::string buf;
  buf.append("NNC1", 4);
  const NetworkConfig& c = params.cfg;
  append_u32le(buf, static_cast<std::uint32_t>(c.input_side));
  append_u32le(buf, static_cast<std::uint32_t>(c.input_channels));
  for (const auto& s : c.conv) {
    append_u32le(buf, static_cast<std::uint32_t>(s.out_channels));
    append_u32le(buf, static_cast<std::uint32_t>(s.kernel));
    append_u32le(buf, static_cast<std::uint32_t>(s.stride));
    append_u32le(buf, static_cast<std::uint32_t>(s.pad));
  }
  for (int p : c.pool_after) append_u32le(buf, static_cast<std::uint32_t>(p));
  for (int w : c.fc) append_u32le(buf, static_cast<std::uint32_t>(w));
  for (const auto& l : params.conv) {
    for (double v : l.w) append_f64le(buf, v);
    for (double v : l.b) append_f64le(buf, v);
  }
  for (const auto& l : params.fc) {
    for (double v : l.w) append_f64le(buf, v);
    for (double v : l.b) append_f64le(buf, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw VolumeIoError(VolumeIoError::Kind::WriteFailed, 0,
                        "cannot open checkpoint for writing: " + path);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) {
    throw VolumeIoError(VolumeIoError::Kind::WriteFailed, 0, "short checkpoint write: " + path);
  }
}

NetworkParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw VolumeIoError(VolumeIoError::Kind::MissingFile, 0, "checkpoint not found: " + path);
  }
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 4 || std::memcmp(buf.data(), "NNC1", 4) != 0) {
    throw VolumeIoError(VolumeIoError::Kind::BadMagic, 0, "bad checkpoint magic in " + path);
  }
  std::size_t pos = 4;
  NetworkConfig cfg;
  cfg.input_side = static_cast<int>(take_u32le(buf, pos, path));
  cfg.input_channels = static_cast<int>(take_u32le(buf, pos, path));
  for (auto& s : cfg.conv) {
    s.out_channels = static_cast<int>(take_u32le(buf, pos, path));
    s.kernel = static_cast<int>(take_u32le(buf, pos, path));
    s.stride = static_cast<int>(take_u32le(buf, pos, path));
    s.pad = static_cast<int>(take_u32le(buf, pos, path));
  }
  for (auto& p : cfg.pool_after) p = static_cast<int>(take_u32le(buf, pos, path));
  for (auto& w : cfg.fc) w = static_cast<int>(take_u32le(buf, pos, path));

  NetworkParams params = zero_params(cfg);
  for (auto& l : params.conv) {
    for (auto& v : l.w) v = take_f64le(buf, pos, path);
    for (auto& v : l.b) v = take_f64le(buf, pos, path);
  }
  for (auto& l : params.fc) {
    for (auto& v : l.w) v = take_f64le(buf, pos, path);
    for (auto& v : l.b) v = take_f64le(buf, pos, path);
  }
  return params;
}

void export_loss_csv(const std::vector<double>& loss_curve, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot open loss csv for writing: " + path);
  out << "iteration,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < loss_curve.size(); ++i) {
    out << i << "," << loss_curve[i] << "\n";
  }
}

}  // namespace nodule
