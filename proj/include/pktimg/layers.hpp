#pragma once

// Dense tensors and the forward/backward kernels of the CNN. Activations
// use HWC layout; convolution weights are [KH, KW, Cin, Cout] and dense
// weights [In, Out], so the innermost loops run over contiguous outputs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "pktimg/error.hpp"

namespace pktimg {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
      : shape(std::move(dims)), values(element_count(shape), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t size() const { return values.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  void fill(double v) { std::fill(values.begin(), values.end(), v); }

  bool operator==(const Tensor&) const = default;
};

namespace detail {

inline void expect_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank || t.size() != Tensor::element_count(t.shape)) {
    throw ContractError(std::string(what) + ": expected rank-" + std::to_string(rank) +
                        " tensor");
  }
}

}  // namespace detail

// out[i,j,o] = b[o] + sum_{di,dj,c} x[i+di, j+dj, c] * w[di,dj,c,o]
inline Tensor conv2d_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::expect_rank(x, 3, "conv2d input");
  detail::expect_rank(w, 4, "conv2d weights");
  detail::expect_rank(b, 1, "conv2d bias");
  const std::size_t h = x.dim(0), wd = x.dim(1), cin = x.dim(2);
  const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  if (w.dim(2) != cin || b.dim(0) != cout) throw ContractError("conv2d: channel mismatch");
  if (h < kh || wd < kw) throw ContractError("conv2d: input smaller than kernel");
  const std::size_t oh = h - kh + 1, ow = wd - kw + 1;
  Tensor out({oh, ow, cout});
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double* o = &out.values[(i * ow + j) * cout];
      std::copy(b.values.begin(), b.values.end(), o);
      for (std::size_t di = 0; di < kh; ++di) {
        for (std::size_t dj = 0; dj < kw; ++dj) {
          const double* xi = &x.values[((i + di) * wd + (j + dj)) * cin];
          const double* wk = &w.values[(di * kw + dj) * cin * cout];
          for (std::size_t c = 0; c < cin; ++c) {
            const double xv = xi[c];
            const double* wc = wk + c * cout;
            for (std::size_t k = 0; k < cout; ++k) o[k] += xv * wc[k];
          }
        }
      }
    }
  }
  return out;
}

struct ConvGrads {
  Tensor dx;  // empty when not requested
  Tensor dw;
  Tensor db;
};

inline ConvGrads conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& dout,
                                 bool want_dx = true) {
  detail::expect_rank(dout, 3, "conv2d output gradient");
  const std::size_t wd = x.dim(1), cin = x.dim(2);
  const std::size_t kh = w.dim(0), kw = w.dim(1), cout = w.dim(3);
  const std::size_t oh = dout.dim(0), ow = dout.dim(1);
  if (oh + kh - 1 != x.dim(0) || ow + kw - 1 != wd || dout.dim(2) != cout) {
    throw ContractError("conv2d backward: shape mismatch");
  }
  ConvGrads g{want_dx ? Tensor(x.shape) : Tensor(), Tensor(w.shape), Tensor({cout})};
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      const double* d = &dout.values[(i * ow + j) * cout];
      for (std::size_t k = 0; k < cout; ++k) g.db[k] += d[k];
      for (std::size_t di = 0; di < kh; ++di) {
        for (std::size_t dj = 0; dj < kw; ++dj) {
          const std::size_t xoff = ((i + di) * wd + (j + dj)) * cin;
          const std::size_t woff = (di * kw + dj) * cin * cout;
          for (std::size_t c = 0; c < cin; ++c) {
            const double xv = x.values[xoff + c];
            double* dwc = &g.dw.values[woff + c * cout];
            const double* wc = &w.values[woff + c * cout];
            double acc = 0.0;
            for (std::size_t k = 0; k < cout; ++k) {
              dwc[k] += xv * d[k];
              acc += wc[k] * d[k];
            }
            if (want_dx) g.dx.values[xoff + c] += acc;
          }
        }
      }
    }
  }
  return g;
}

struct PoolResult {
  Tensor pooled;
  std::vector<std::size_t> argmax;  // flat input index feeding each output
};

// 2x2 max pooling, stride 2. Odd trailing rows/columns are dropped; ties go
// to the first maximal element in row-major window order.
inline PoolResult maxpool2(const Tensor& x) {
  detail::expect_rank(x, 3, "maxpool input");
  const std::size_t h = x.dim(0), wd = x.dim(1), ch = x.dim(2);
  const std::size_t oh = h / 2, ow = wd / 2;
  PoolResult r{Tensor({oh, ow, ch}), std::vector<std::size_t>(oh * ow * ch)};
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      for (std::size_t c = 0; c < ch; ++c) {
        std::size_t best = ((2 * i) * wd + 2 * j) * ch + c;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            const std::size_t at = ((2 * i + di) * wd + 2 * j + dj) * ch + c;
            if (x.values[at] > x.values[best]) best = at;
          }
        }
        const std::size_t o = (i * ow + j) * ch + c;
        r.pooled[o] = x.values[best];
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

inline Tensor maxpool2_backward(const Tensor& dout, const std::vector<std::size_t>& argmax,
                                const std::vector<std::size_t>& input_shape) {
  if (dout.size() != argmax.size()) throw ContractError("maxpool backward: size mismatch");
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx.values.at(argmax[o]) += dout[o];
  return dx;
}

inline Tensor relu(Tensor x) {
  for (double& v : x.values) v = v > 0.0 ? v : 0.0;
  return x;
}

// Gradient through ReLU given the pre-activation input.
inline Tensor relu_backward(Tensor dout, const Tensor& pre) {
  if (dout.size() != pre.size()) throw ContractError("relu backward: size mismatch");
  for (std::size_t i = 0; i < dout.size(); ++i) {
    if (!(pre[i] > 0.0)) dout[i] = 0.0;
  }
  return dout;
}

// out[o] = b[o] + sum_i x[i] * w[i,o]; x may have any shape, it is read flat.
inline Tensor dense_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  detail::expect_rank(w, 2, "dense weights");
  detail::expect_rank(b, 1, "dense bias");
  const std::size_t in = w.dim(0), out_n = w.dim(1);
  if (x.size() != in || b.dim(0) != out_n) throw ContractError("dense: shape mismatch");
  Tensor out({out_n});
  std::copy(b.values.begin(), b.values.end(), out.values.begin());
  for (std::size_t i = 0; i < in; ++i) {
    const double xv = x[i];
    if (xv == 0.0) continue;
    const double* wi = &w.values[i * out_n];
    for (std::size_t o = 0; o < out_n; ++o) out[o] += xv * wi[o];
  }
  return out;
}

struct DenseGrads {
  Tensor dx;  // same shape as the forward input
  Tensor dw;
  Tensor db;
};

inline DenseGrads dense_backward(const Tensor& x, const Tensor& w, const Tensor& dout) {
  const std::size_t in = w.dim(0), out_n = w.dim(1);
  if (x.size() != in || dout.size() != out_n) {
    throw ContractError("dense backward: shape mismatch");
  }
  DenseGrads g{Tensor(x.shape), Tensor(w.shape), Tensor({out_n})};
  std::copy(dout.values.begin(), dout.values.end(), g.db.values.begin());
  for (std::size_t i = 0; i < in; ++i) {
    const double xv = x[i];
    const double* wi = &w.values[i * out_n];
    double* dwi = &g.dw.values[i * out_n];
    double acc = 0.0;
    for (std::size_t o = 0; o < out_n; ++o) {
      dwi[o] = xv * dout[o];
      acc += wi[o] * dout[o];
    }
    g.dx[i] = acc;
  }
  return g;
}

struct SoftmaxXent {
  double loss = 0.0;
  Tensor probs;
  Tensor dlogits;
};

inline Tensor softmax(const Tensor& logits) {
  if (logits.size() == 0) throw ContractError("softmax: empty logits");
  const double peak = *std::max_element(logits.values.begin(), logits.values.end());
  Tensor p({logits.size()});
  double sum = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp(logits[k] - peak);
    sum += p[k];
  }
  for (double& v : p.values) v /= sum;
  return p;
}

inline SoftmaxXent softmax_xent(const Tensor& logits, std::size_t label) {
  if (logits.size() < 2) throw ContractError("softmax_xent: need at least 2 classes");
  if (label >= logits.size()) throw ContractError("softmax_xent: label out of range");
  SoftmaxXent r;
  // Loss from the log-sum-exp form so it stays finite when probs underflow.
  const double peak = *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  for (double v : logits.values) sum += std::exp(v - peak);
  r.loss = -(logits[label] - peak - std::log(sum));
  r.probs = softmax(logits);
  r.dlogits = r.probs;
  r.dlogits[label] -= 1.0;
  return r;
}

}  // namespace pktimg
