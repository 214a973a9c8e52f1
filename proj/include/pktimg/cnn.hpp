#pragma once

// Fixed small CNN:
//   input HxWx1 (pixels / pixel_max)
//   conv 3x3 x conv1_filters + ReLU -> maxpool 2x2
//   conv 3x3 x conv2_filters + ReLU -> maxpool 2x2
//   dense dense_units + ReLU -> dense num_classes -> softmax
// Trained with plain mini-batch SGD. Single-threaded and bitwise
// reproducible for a given (seed, data, config).

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pktimg/byteio.hpp"
#include "pktimg/dataset.hpp"
#include "pktimg/encoders.hpp"
#include "pktimg/error.hpp"
#include "pktimg/layers.hpp"
#include "pktimg/rng.hpp"

namespace pktimg {

inline constexpr std::size_t kKernel = 3;

struct ModelConfig {
  std::size_t height = 28;
  std::size_t width = 28;
  std::uint8_t pixel_max = 255;
  std::size_t num_classes = 2;
  std::size_t conv1_filters = 8;
  std::size_t conv2_filters = 16;
  std::size_t dense_units = 64;
  std::uint64_t seed = 1;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;

  std::size_t pool1_h() const { return (height - kKernel + 1) / 2; }
  std::size_t pool1_w() const { return (width - kKernel + 1) / 2; }
  std::size_t pool2_h() const { return (pool1_h() - kKernel + 1) / 2; }
  std::size_t pool2_w() const { return (pool1_w() - kKernel + 1) / 2; }
  std::size_t flat_features() const { return pool2_h() * pool2_w() * conv2_filters; }

  bool operator==(const ModelConfig&) const = default;
};

// Smallest side that survives conv-pool-conv-pool with at least one cell.
inline constexpr std::size_t kMinInputSide = 10;

inline void validate(const ModelConfig& c) {
  if (c.height < kMinInputSide || c.width < kMinInputSide) {
    throw ContractError("model input " + std::to_string(c.height) + "x" +
                        std::to_string(c.width) + " is too small; layers need at least " +
                        std::to_string(kMinInputSide) + "x" + std::to_string(kMinInputSide));
  }
  if (c.num_classes < 2) throw ContractError("model needs at least 2 classes");
  if (c.pixel_max == 0) throw ContractError("pixel_max must be positive");
  if (c.conv1_filters == 0 || c.conv2_filters == 0 || c.dense_units == 0) {
    throw ContractError("layer widths must be positive");
  }
  if (c.batch_size == 0) throw ContractError("batch size must be positive");
  if (!std::isfinite(c.learning_rate) || c.learning_rate < 0.0) {
    throw ContractError("learning rate must be finite and non-negative");
  }
}

// Weight/bias tensors in checkpoint declaration order.
struct Parameters {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor dense1_w, dense1_b;
  Tensor dense2_w, dense2_b;

  static constexpr std::size_t kCount = 8;

  std::array<Tensor*, kCount> tensors() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense1_w, &dense1_b, &dense2_w, &dense2_b};
  }
  std::array<const Tensor*, kCount> tensors() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &dense1_w, &dense1_b, &dense2_w, &dense2_b};
  }

  bool operator==(const Parameters&) const = default;
};

inline Parameters zero_parameters(const ModelConfig& c) {
  Parameters p;
  p.conv1_w = Tensor({kKernel, kKernel, 1, c.conv1_filters});
  p.conv1_b = Tensor({c.conv1_filters});
  p.conv2_w = Tensor({kKernel, kKernel, c.conv1_filters, c.conv2_filters});
  p.conv2_b = Tensor({c.conv2_filters});
  p.dense1_w = Tensor({c.flat_features(), c.dense_units});
  p.dense1_b = Tensor({c.dense_units});
  p.dense2_w = Tensor({c.dense_units, c.num_classes});
  p.dense2_b = Tensor({c.num_classes});
  return p;
}

struct CnnModel {
  ModelConfig config;
  Parameters params;

  bool operator==(const CnnModel&) const = default;
};

inline CnnModel zero_model(const ModelConfig& cfg) {
  validate(cfg);
  return CnnModel{cfg, zero_parameters(cfg)};
}

// He-normal weights (stddev sqrt(2 / fan_in)), zero biases.
inline CnnModel init_model(const ModelConfig& cfg, Rng& rng) {
  CnnModel m = zero_model(cfg);
  auto he = [&](Tensor& w, std::size_t fan_in) {
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.values) v = rng.normal(0.0, sd);
  };
  he(m.params.conv1_w, kKernel * kKernel);
  he(m.params.conv2_w, kKernel * kKernel * cfg.conv1_filters);
  he(m.params.dense1_w, cfg.flat_features());
  he(m.params.dense2_w, cfg.dense_units);
  return m;
}

inline CnnModel init_model(const ModelConfig& cfg) {
  Rng rng(cfg.seed);
  return init_model(cfg, rng);
}

inline Tensor to_input(std::span<const std::uint8_t> pixels, std::size_t height,
                       std::size_t width, std::uint8_t pixel_max) {
  if (pixels.size() != height * width) throw ContractError("input: pixel count mismatch");
  Tensor x({height, width, 1});
  const double scale = 1.0 / static_cast<double>(pixel_max);
  for (std::size_t i = 0; i < pixels.size(); ++i) x[i] = pixels[i] * scale;
  return x;
}

// Activations kept for the backward pass.
struct ForwardTrace {
  Tensor input;
  Tensor conv1_pre, conv1_act;
  PoolResult pool1;
  Tensor conv2_pre, conv2_act;
  PoolResult pool2;
  Tensor dense1_pre, dense1_act;
  Tensor logits;
};

inline ForwardTrace forward_trace(const CnnModel& m, Tensor input) {
  const Parameters& p = m.params;
  if (input.shape != std::vector<std::size_t>{m.config.height, m.config.width, 1}) {
    throw ContractError("input shape does not match the model");
  }
  ForwardTrace t;
  t.input = std::move(input);
  t.conv1_pre = conv2d_forward(t.input, p.conv1_w, p.conv1_b);
  t.conv1_act = relu(t.conv1_pre);
  t.pool1 = maxpool2(t.conv1_act);
  t.conv2_pre = conv2d_forward(t.pool1.pooled, p.conv2_w, p.conv2_b);
  t.conv2_act = relu(t.conv2_pre);
  t.pool2 = maxpool2(t.conv2_act);
  t.dense1_pre = dense_forward(t.pool2.pooled, p.dense1_w, p.dense1_b);
  t.dense1_act = relu(t.dense1_pre);
  t.logits = dense_forward(t.dense1_act, p.dense2_w, p.dense2_b);
  return t;
}

inline Tensor forward(const CnnModel& m, Tensor input) {
  return forward_trace(m, std::move(input)).logits;
}

// Reverse-mode pass from dL/dlogits through the fixed stack.
inline Parameters backward_from_logits(const CnnModel& m, const ForwardTrace& t,
                                       const Tensor& dlogits) {
  const Parameters& p = m.params;
  Parameters g;
  DenseGrads d2 = dense_backward(t.dense1_act, p.dense2_w, dlogits);
  g.dense2_w = std::move(d2.dw);
  g.dense2_b = std::move(d2.db);
  DenseGrads d1 = dense_backward(t.pool2.pooled, p.dense1_w,
                                 relu_backward(std::move(d2.dx), t.dense1_pre));
  g.dense1_w = std::move(d1.dw);
  g.dense1_b = std::move(d1.db);
  Tensor dconv2 = relu_backward(
      maxpool2_backward(d1.dx, t.pool2.argmax, t.conv2_act.shape), t.conv2_pre);
  ConvGrads c2 = conv2d_backward(t.pool1.pooled, p.conv2_w, dconv2);
  g.conv2_w = std::move(c2.dw);
  g.conv2_b = std::move(c2.db);
  Tensor dconv1 = relu_backward(
      maxpool2_backward(c2.dx, t.pool1.argmax, t.conv1_act.shape), t.conv1_pre);
  ConvGrads c1 = conv2d_backward(t.input, p.conv1_w, dconv1, /*want_dx=*/false);
  g.conv1_w = std::move(c1.dw);
  g.conv1_b = std::move(c1.db);
  return g;
}

struct Gradients {
  double loss = 0.0;
  Tensor probs;
  Parameters params;
};

inline Gradients backward(const CnnModel& m, const Tensor& input, std::size_t label) {
  const ForwardTrace t = forward_trace(m, input);
  SoftmaxXent sx = softmax_xent(t.logits, label);
  return Gradients{sx.loss, std::move(sx.probs), backward_from_logits(m, t, sx.dlogits)};
}

// Scalar loss, used by finite-difference checks.
inline double loss(const CnnModel& m, const Tensor& input, std::size_t label) {
  return softmax_xent(forward(m, input), label).loss;
}

struct Prediction {
  std::size_t class_id = 0;
  Tensor probs;
};

inline std::size_t argmax_first(const Tensor& t) {
  return static_cast<std::size_t>(
      std::distance(t.values.begin(), std::max_element(t.values.begin(), t.values.end())));
}

inline Prediction predict(const CnnModel& m, std::span<const std::uint8_t> pixels) {
  Tensor probs = softmax(forward(
      m, to_input(pixels, m.config.height, m.config.width, m.config.pixel_max)));
  const std::size_t best = argmax_first(probs);
  return Prediction{best, std::move(probs)};
}

inline Prediction predict(const CnnModel& m, const PseudoImage& img) {
  if (img.height != m.config.height || img.width != m.config.width) {
    throw ContractError("image shape " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + " does not match the model");
  }
  if (img.pixel_max != m.config.pixel_max) {
    throw ContractError("image pixel_max does not match the model");
  }
  return predict(m, img.pixels);
}

// Builds the config for a dataset, keeping hyperparameters from `base`.
inline ModelConfig config_for(const ImageDataset& ds, ModelConfig base) {
  base.height = ds.height;
  base.width = ds.width;
  base.pixel_max = ds.pixel_max;
  base.num_classes = ds.num_classes();
  return base;
}

inline void check_compatible(const CnnModel& m, const ImageDataset& ds) {
  const ModelConfig& c = m.config;
  if (ds.height != c.height || ds.width != c.width) {
    throw ContractError("dataset images are " + std::to_string(ds.width) + "x" +
                        std::to_string(ds.height) + " but the model expects " +
                        std::to_string(c.width) + "x" + std::to_string(c.height));
  }
  if (ds.num_classes() != c.num_classes) {
    throw ContractError("dataset has " + std::to_string(ds.num_classes()) +
                        " classes but the model has " + std::to_string(c.num_classes));
  }
  if (ds.pixel_max != c.pixel_max) throw ContractError("dataset pixel_max differs from model");
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;  // on the training samples, measured before each update

  bool operator==(const EpochStats&) const = default;
};

struct TrainResult {
  CnnModel model;
  std::vector<EpochStats> history;
  double train_time_s = 0.0;
};

inline void sgd_step(Parameters& params, const Parameters& grad_sum, double lr,
                     std::size_t batch) {
  const double step = lr / static_cast<double>(batch);
  auto dst = params.tensors();
  auto src = grad_sum.tensors();
  for (std::size_t t = 0; t < Parameters::kCount; ++t) {
    for (std::size_t i = 0; i < dst[t]->size(); ++i) {
      dst[t]->values[i] -= step * src[t]->values[i];
    }
  }
}

inline void accumulate(Parameters& sum, const Parameters& g) {
  auto dst = sum.tensors();
  auto src = g.tensors();
  for (std::size_t t = 0; t < Parameters::kCount; ++t) {
    for (std::size_t i = 0; i < dst[t]->size(); ++i) dst[t]->values[i] += src[t]->values[i];
  }
}

inline TrainResult train(const ImageDataset& ds, const ModelConfig& cfg) {
  if (ds.records.empty()) throw ContractError("cannot train on an empty dataset");
  validate(cfg);
  const auto started = std::chrono::steady_clock::now();
  Rng rng(cfg.seed);
  TrainResult out{init_model(cfg, rng), {}, 0.0};
  check_compatible(out.model, ds);

  std::vector<Tensor> inputs;
  inputs.reserve(ds.records.size());
  for (const ImageRecord& r : ds.records) {
    inputs.push_back(to_input(r.pixels, cfg.height, cfg.width, cfg.pixel_max));
  }

  std::vector<std::size_t> order(ds.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      Parameters grad_sum = zero_parameters(cfg);
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t idx = order[k];
        const Gradients g = backward(out.model, inputs[idx], ds.records[idx].label);
        loss_sum += g.loss;
        if (argmax_first(g.probs) == ds.records[idx].label) ++correct;
        accumulate(grad_sum, g.params);
      }
      sgd_step(out.model.params, grad_sum, cfg.learning_rate, end - start);
    }
    const double n = static_cast<double>(order.size());
    out.history.push_back(EpochStats{epoch + 1, loss_sum / n, static_cast<double>(correct) / n});
  }
  out.train_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   "PCNN" | version u16 = 1
//   config: height u16, width u16, pixel_max u8, num_classes u16,
//           conv1_filters u16, conv2_filters u16, dense_units u16,
//           seed u64, learning_rate f64, batch_size u32, epochs u32
//   tensor count u16, then per tensor in declaration order:
//           rank u8, dims u32 x rank, values f64 x product(dims)
// Little-endian throughout; reals are raw IEEE-754 binary64.

inline constexpr std::string_view kModelMagic = "PCNN";
inline constexpr std::uint16_t kModelVersion = 1;

inline Bytes serialize_model(const CnnModel& m) {
  const ModelConfig& c = m.config;
  ByteWriter w;
  w.bytes(kModelMagic);
  w.le(kModelVersion);
  w.le(static_cast<std::uint16_t>(c.height));
  w.le(static_cast<std::uint16_t>(c.width));
  w.le(c.pixel_max);
  w.le(static_cast<std::uint16_t>(c.num_classes));
  w.le(static_cast<std::uint16_t>(c.conv1_filters));
  w.le(static_cast<std::uint16_t>(c.conv2_filters));
  w.le(static_cast<std::uint16_t>(c.dense_units));
  w.le(c.seed);
  w.f64(c.learning_rate);
  w.le(static_cast<std::uint32_t>(c.batch_size));
  w.le(static_cast<std::uint32_t>(c.epochs));
  w.le(static_cast<std::uint16_t>(Parameters::kCount));
  for (const Tensor* t : m.params.tensors()) {
    w.le(static_cast<std::uint8_t>(t->rank()));
    for (std::size_t d : t->shape) w.le(static_cast<std::uint32_t>(d));
    for (double v : t->values) w.f64(v);
  }
  return std::move(w).take();
}

inline CnnModel parse_model(ByteView data) {
  ByteReader in(data, "model");
  const ByteView magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), kModelMagic.begin())) {
    throw FormatError("model: bad magic", 0);
  }
  if (in.le<std::uint16_t>() != kModelVersion) throw FormatError("model: unsupported version", 4);
  ModelConfig c;
  c.height = in.le<std::uint16_t>();
  c.width = in.le<std::uint16_t>();
  c.pixel_max = in.le<std::uint8_t>();
  c.num_classes = in.le<std::uint16_t>();
  c.conv1_filters = in.le<std::uint16_t>();
  c.conv2_filters = in.le<std::uint16_t>();
  c.dense_units = in.le<std::uint16_t>();
  c.seed = in.le<std::uint64_t>();
  c.learning_rate = in.f64();
  c.batch_size = in.le<std::uint32_t>();
  c.epochs = in.le<std::uint32_t>();
  const std::size_t config_end = in.offset();
  try {
    validate(c);
  } catch (const ContractError& e) {
    throw FormatError(std::string("model: invalid config: ") + e.what(), config_end);
  }
  if (in.le<std::uint16_t>() != Parameters::kCount) {
    throw FormatError("model: unexpected tensor count", config_end);
  }
  CnnModel m{c, zero_parameters(c)};
  for (Tensor* t : m.params.tensors()) {
    const std::size_t at = in.offset();
    const std::size_t rank = in.le<std::uint8_t>();
    std::vector<std::size_t> shape(rank);
    for (std::size_t& d : shape) d = in.le<std::uint32_t>();
    if (shape != t->shape) throw FormatError("model: tensor shape does not match config", at);
    for (double& v : t->values) v = in.f64();
  }
  if (in.remaining() != 0) throw FormatError("model: trailing bytes", in.offset());
  return m;
}

inline void save_model(const CnnModel& m, const std::string& path) {
  write_file(path, serialize_model(m));
}

inline CnnModel load_model(const std::string& path) { return parse_model(read_file(path)); }

}  // namespace pktimg
