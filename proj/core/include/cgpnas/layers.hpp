#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "cgpnas/catalog.hpp"
#include "cgpnas/errors.hpp"
#include "cgpnas/graph.hpp"
#include "cgpnas/rng.hpp"
#include "cgpnas/tensor.hpp"

namespace cgpnas {

enum class RunMode { Train, Infer };

// Learnable array plus its gradient. Gradients accumulate across a batch
// and are cleared by the training loop, not by the layer.
template <typename S>
struct ParamSlot {
  std::string name;
  std::vector<int> dims;
  std::vector<S> value;
  std::vector<S> grad;

  void configure(std::string n, std::vector<int> d) {
    name = std::move(n);
    dims = std::move(d);
    std::size_t total = 1;
    for (int x : dims) total *= static_cast<std::size_t>(x);
    value.assign(total, S(0));
    grad.assign(total, S(0));
  }
};

// Non-learnable buffer that still belongs in a weight snapshot, e.g.
// normalization running statistics.
template <typename S>
struct NamedArray {
  std::string name;
  std::vector<int> dims;
  std::vector<S>* data;
};

// ---------------------------------------------------------------------
// primitives

// Stride-1 convolution with zero padding k/2, so spatial size is kept.
// Weights are laid out [di][dj][c_in][c_out] with c_out contiguous.
template <typename S>
void conv2d_forward(const Tensor4<S>& in, const std::vector<S>& w, const std::vector<S>& bias,
                    int k, Tensor4<S>& out) {
  const int B = in.batch(), M = in.rows(), N = in.cols();
  const int ci_n = in.channels(), co_n = out.channels();
  const int p = k / 2;
  if (out.batch() != B || out.rows() != M || out.cols() != N)
    throw ShapeMismatch("conv2d_forward: output dims");
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) {
        S* orow = &out.at(b, i, j, 0);
        for (int co = 0; co < co_n; ++co) orow[co] = bias[static_cast<std::size_t>(co)];
        const int di_lo = std::max(0, p - i), di_hi = std::min(k - 1, M - 1 - i + p);
        const int dj_lo = std::max(0, p - j), dj_hi = std::min(k - 1, N - 1 - j + p);
        for (int di = di_lo; di <= di_hi; ++di)
          for (int dj = dj_lo; dj <= dj_hi; ++dj) {
            const S* irow = &in.at(b, i + di - p, j + dj - p, 0);
            const S* wrow = &w[static_cast<std::size_t>((di * k + dj) * ci_n) * co_n];
            for (int ci = 0; ci < ci_n; ++ci) {
              const S a = irow[ci];
              const S* wr = wrow + static_cast<std::size_t>(ci) * co_n;
              for (int co = 0; co < co_n; ++co) orow[co] += a * wr[co];
            }
          }
      }
}

// Gradients w.r.t. input, weights and bias in one pass. All outputs
// accumulate so callers can fan gradients in from several consumers.
template <typename S>
void conv2d_backward(const Tensor4<S>& in, const std::vector<S>& w, int k,
                     const Tensor4<S>& grad_out, Tensor4<S>& grad_in, std::vector<S>& grad_w,
                     std::vector<S>& grad_bias) {
  const int B = in.batch(), M = in.rows(), N = in.cols();
  const int ci_n = in.channels(), co_n = grad_out.channels();
  const int p = k / 2;
  if (!grad_in.same_dims(in)) throw ShapeMismatch("conv2d_backward: grad_in dims");
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < M; ++i)
      for (int j = 0; j < N; ++j) {
        const S* grow = &grad_out.at(b, i, j, 0);
        for (int co = 0; co < co_n; ++co) grad_bias[static_cast<std::size_t>(co)] += grow[co];
        const int di_lo = std::max(0, p - i), di_hi = std::min(k - 1, M - 1 - i + p);
        const int dj_lo = std::max(0, p - j), dj_hi = std::min(k - 1, N - 1 - j + p);
        for (int di = di_lo; di <= di_hi; ++di)
          for (int dj = dj_lo; dj <= dj_hi; ++dj) {
            const int ii = i + di - p, jj = j + dj - p;
            const S* irow = &in.at(b, ii, jj, 0);
            S* girow = &grad_in.at(b, ii, jj, 0);
            const std::size_t base = static_cast<std::size_t>((di * k + dj) * ci_n) * co_n;
            for (int ci = 0; ci < ci_n; ++ci) {
              const S a = irow[ci];
              const S* wr = &w[base + static_cast<std::size_t>(ci) * co_n];
              S* gwr = &grad_w[base + static_cast<std::size_t>(ci) * co_n];
              S acc = S(0);
              for (int co = 0; co < co_n; ++co) {
                acc += grow[co] * wr[co];
                gwr[co] += a * grow[co];
              }
              girow[ci] += acc;
            }
          }
      }
}

template <typename S>
struct BatchNormCache {
  Tensor4<S> xhat;
  std::vector<S> invstd;
};

// Per-channel normalization over (batch, rows, cols). Train mode uses
// batch statistics (biased variance) and folds them into the running
// estimates as running = momentum*running + (1-momentum)*batch.
template <typename S>
void batch_norm_forward(const Tensor4<S>& x, const std::vector<S>& gamma,
                        const std::vector<S>& beta, std::vector<S>& running_mean,
                        std::vector<S>& running_var, RunMode mode, double momentum, double eps,
                        Tensor4<S>& y, BatchNormCache<S>* cache) {
  const int C = x.channels();
  const std::size_t total = x.size();
  const std::size_t n = total / static_cast<std::size_t>(C);
  const S* xd = x.data();
  S* yd = y.data();

  if (mode == RunMode::Infer) {
    std::vector<S> scale(static_cast<std::size_t>(C)), shift(static_cast<std::size_t>(C));
    for (int c = 0; c < C; ++c) {
      const S inv = S(1) / static_cast<S>(
          std::sqrt(static_cast<double>(running_var[static_cast<std::size_t>(c)]) + eps));
      scale[static_cast<std::size_t>(c)] = gamma[static_cast<std::size_t>(c)] * inv;
      shift[static_cast<std::size_t>(c)] = beta[static_cast<std::size_t>(c)] -
          running_mean[static_cast<std::size_t>(c)] * scale[static_cast<std::size_t>(c)];
    }
    for (std::size_t i = 0; i < total; i += C)
      for (int c = 0; c < C; ++c) yd[i + c] = xd[i + c] * scale[c] + shift[c];
    return;
  }

  std::vector<double> mean(static_cast<std::size_t>(C), 0.0), var(static_cast<std::size_t>(C), 0.0);
  for (std::size_t i = 0; i < total; i += C)
    for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += xd[i + c];
  for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] /= static_cast<double>(n);
  for (std::size_t i = 0; i < total; i += C)
    for (int c = 0; c < C; ++c) {
      const double d = xd[i + c] - mean[static_cast<std::size_t>(c)];
      var[static_cast<std::size_t>(c)] += d * d;
    }
  for (int c = 0; c < C; ++c) var[static_cast<std::size_t>(c)] /= static_cast<double>(n);

  cache->xhat = Tensor4<S>(x.batch(), x.rows(), x.cols(), C);
  cache->invstd.resize(static_cast<std::size_t>(C));
  S* xh = cache->xhat.data();
  for (int c = 0; c < C; ++c) {
    cache->invstd[static_cast<std::size_t>(c)] =
        static_cast<S>(1.0 / std::sqrt(var[static_cast<std::size_t>(c)] + eps));
    running_mean[static_cast<std::size_t>(c)] = static_cast<S>(
        momentum * running_mean[static_cast<std::size_t>(c)] +
        (1.0 - momentum) * mean[static_cast<std::size_t>(c)]);
    running_var[static_cast<std::size_t>(c)] = static_cast<S>(
        momentum * running_var[static_cast<std::size_t>(c)] +
        (1.0 - momentum) * var[static_cast<std::size_t>(c)]);
  }
  for (std::size_t i = 0; i < total; i += C)
    for (int c = 0; c < C; ++c) {
      const S xc = static_cast<S>((xd[i + c] - mean[static_cast<std::size_t>(c)]) *
                                  cache->invstd[static_cast<std::size_t>(c)]);
      xh[i + c] = xc;
      yd[i + c] = gamma[static_cast<std::size_t>(c)] * xc + beta[static_cast<std::size_t>(c)];
    }
}

// Backpropagation through the batch statistics themselves (train mode).
template <typename S>
void batch_norm_backward(const Tensor4<S>& grad_y, const std::vector<S>& gamma,
                         const BatchNormCache<S>& cache, Tensor4<S>& grad_x,
                         std::vector<S>& grad_gamma, std::vector<S>& grad_beta) {
  const int C = grad_y.channels();
  const std::size_t total = grad_y.size();
  const double n = static_cast<double>(total / static_cast<std::size_t>(C));
  const S* gy = grad_y.data();
  const S* xh = cache.xhat.data();
  S* gx = grad_x.data();

  std::vector<double> sum_gy(static_cast<std::size_t>(C), 0.0),
      sum_gy_xh(static_cast<std::size_t>(C), 0.0);
  for (std::size_t i = 0; i < total; i += C)
    for (int c = 0; c < C; ++c) {
      sum_gy[static_cast<std::size_t>(c)] += gy[i + c];
      sum_gy_xh[static_cast<std::size_t>(c)] += static_cast<double>(gy[i + c]) * xh[i + c];
    }
  for (int c = 0; c < C; ++c) {
    grad_gamma[static_cast<std::size_t>(c)] += static_cast<S>(sum_gy_xh[static_cast<std::size_t>(c)]);
    grad_beta[static_cast<std::size_t>(c)] += static_cast<S>(sum_gy[static_cast<std::size_t>(c)]);
  }
  for (std::size_t i = 0; i < total; i += C)
    for (int c = 0; c < C; ++c) {
      const double term = gy[i + c] - sum_gy[static_cast<std::size_t>(c)] / n -
                          xh[i + c] * sum_gy_xh[static_cast<std::size_t>(c)] / n;
      gx[i + c] += static_cast<S>(gamma[static_cast<std::size_t>(c)] *
                                  cache.invstd[static_cast<std::size_t>(c)] * term);
    }
}

template <typename S>
void relu_forward(const Tensor4<S>& x, Tensor4<S>& y) {
  const S* xd = x.data();
  S* yd = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) yd[i] = xd[i] > S(0) ? xd[i] : S(0);
}

// The mask is recovered from the output: y > 0 exactly where x > 0.
template <typename S>
void relu_backward(const Tensor4<S>& y, const Tensor4<S>& grad_y, Tensor4<S>& grad_x) {
  const S* yd = y.data();
  const S* gy = grad_y.data();
  S* gx = grad_x.data();
  for (std::size_t i = 0; i < y.size(); ++i) gx[i] += yd[i] > S(0) ? gy[i] : S(0);
}

// Valid (unpadded) max pooling. With kernel 2, stride 2 this is the
// floor-halving the shape rules promise for any extent >= 2. Ties go to
// the first cell in row-major window order; argmax records flat input
// indices for the backward scatter.
template <typename S>
void max_pool_forward(const Tensor4<S>& in, int kh, int kw, int sh, int sw, Tensor4<S>& out,
                      std::vector<std::int64_t>* argmax) {
  const int B = in.batch(), C = in.channels();
  const int Mo = out.rows(), No = out.cols();
  if (argmax) argmax->assign(out.size(), 0);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Mo; ++i)
      for (int j = 0; j < No; ++j)
        for (int c = 0; c < C; ++c) {
          S best = in.at(b, i * sh, j * sw, c);
          std::int64_t best_idx = static_cast<std::int64_t>(in.index(b, i * sh, j * sw, c));
          for (int di = 0; di < kh; ++di)
            for (int dj = 0; dj < kw; ++dj) {
              const S v = in.at(b, i * sh + di, j * sw + dj, c);
              if (v > best) {
                best = v;
                best_idx = static_cast<std::int64_t>(in.index(b, i * sh + di, j * sw + dj, c));
              }
            }
          out.at(b, i, j, c) = best;
          if (argmax)
            (*argmax)[out.index(b, i, j, c)] = best_idx;
        }
}

template <typename S>
void max_pool_backward(const Tensor4<S>& grad_out, const std::vector<std::int64_t>& argmax,
                       Tensor4<S>& grad_in) {
  const S* go = grad_out.data();
  S* gi = grad_in.data();
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    gi[static_cast<std::size_t>(argmax[i])] += go[i];
}

template <typename S>
void avg_pool_forward(const Tensor4<S>& in, int kh, int kw, int sh, int sw, Tensor4<S>& out) {
  const int B = in.batch(), C = in.channels();
  const int Mo = out.rows(), No = out.cols();
  const S scale = S(1) / static_cast<S>(kh * kw);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Mo; ++i)
      for (int j = 0; j < No; ++j) {
        S* orow = &out.at(b, i, j, 0);
        for (int c = 0; c < C; ++c) orow[c] = S(0);
        for (int di = 0; di < kh; ++di)
          for (int dj = 0; dj < kw; ++dj) {
            const S* irow = &in.at(b, i * sh + di, j * sw + dj, 0);
            for (int c = 0; c < C; ++c) orow[c] += irow[c];
          }
        for (int c = 0; c < C; ++c) orow[c] *= scale;
      }
}

template <typename S>
void avg_pool_backward(const Tensor4<S>& grad_out, int kh, int kw, int sh, int sw,
                       Tensor4<S>& grad_in) {
  const int B = grad_out.batch(), C = grad_out.channels();
  const int Mo = grad_out.rows(), No = grad_out.cols();
  const S scale = S(1) / static_cast<S>(kh * kw);
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < Mo; ++i)
      for (int j = 0; j < No; ++j) {
        const S* grow = &grad_out.at(b, i, j, 0);
        for (int di = 0; di < kh; ++di)
          for (int dj = 0; dj < kw; ++dj) {
            S* girow = &grad_in.at(b, i * sh + di, j * sw + dj, 0);
            for (int c = 0; c < C; ++c) girow[c] += grow[c] * scale;
          }
      }
}

// Channel concatenation of two spatially equal tensors.
template <typename S>
void channel_concat(const Tensor4<S>& a, const Tensor4<S>& b, Tensor4<S>& out) {
  const int Ca = a.channels(), Cb = b.channels();
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.batch() != b.batch() ||
      out.channels() != Ca + Cb)
    throw ShapeMismatch("channel_concat: operand dims");
  const std::size_t cells = a.size() / static_cast<std::size_t>(Ca);
  const S* ad = a.data();
  const S* bd = b.data();
  S* od = out.data();
  for (std::size_t i = 0; i < cells; ++i) {
    for (int c = 0; c < Ca; ++c) od[i * (Ca + Cb) + c] = ad[i * Ca + c];
    for (int c = 0; c < Cb; ++c) od[i * (Ca + Cb) + Ca + c] = bd[i * Cb + c];
  }
}

template <typename S>
void concat_backward(const Tensor4<S>& grad_out, Tensor4<S>& grad_a, Tensor4<S>& grad_b) {
  const int Ca = grad_a.channels(), Cb = grad_b.channels();
  const std::size_t cells = grad_a.size() / static_cast<std::size_t>(Ca);
  const S* go = grad_out.data();
  S* ga = grad_a.data();
  S* gb = grad_b.data();
  for (std::size_t i = 0; i < cells; ++i) {
    for (int c = 0; c < Ca; ++c) ga[i * Ca + c] += go[i * (Ca + Cb) + c];
    for (int c = 0; c < Cb; ++c) gb[i * Cb + c] += go[i * (Ca + Cb) + Ca + c];
  }
}

// Element-wise sum where the tensor with fewer channels is implicitly
// zero-padded up to the wider one.
template <typename S>
void padded_sum(const Tensor4<S>& a, const Tensor4<S>& b, Tensor4<S>& out) {
  const int Ca = a.channels(), Cb = b.channels(), Co = out.channels();
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.batch() != b.batch() ||
      Co != std::max(Ca, Cb))
    throw ShapeMismatch("padded_sum: operand dims");
  const std::size_t cells = out.size() / static_cast<std::size_t>(Co);
  const S* ad = a.data();
  const S* bd = b.data();
  S* od = out.data();
  for (std::size_t i = 0; i < cells; ++i)
    for (int c = 0; c < Co; ++c) {
      const S av = c < Ca ? ad[i * Ca + c] : S(0);
      const S bv = c < Cb ? bd[i * Cb + c] : S(0);
      od[i * Co + c] = av + bv;
    }
}

template <typename S>
void padded_sum_backward(const Tensor4<S>& grad_out, Tensor4<S>& grad_a, Tensor4<S>& grad_b) {
  const int Ca = grad_a.channels(), Cb = grad_b.channels(), Co = grad_out.channels();
  const std::size_t cells = grad_out.size() / static_cast<std::size_t>(Co);
  const S* go = grad_out.data();
  S* ga = grad_a.data();
  S* gb = grad_b.data();
  for (std::size_t i = 0; i < cells; ++i) {
    for (int c = 0; c < Ca; ++c) ga[i * Ca + c] += go[i * Co + c];
    for (int c = 0; c < Cb; ++c) gb[i * Cb + c] += go[i * Co + c];
  }
}

// Fully connected layer over the flattened per-sample features.
template <typename S>
void dense_forward(const Tensor4<S>& x, const std::vector<S>& w, const std::vector<S>& bias,
                   Tensor4<S>& logits) {
  const int B = x.batch(), K = logits.channels();
  const std::size_t F = x.size() / static_cast<std::size_t>(B);
  const S* xd = x.data();
  S* ld = logits.data();
  for (int b = 0; b < B; ++b) {
    S* lrow = ld + static_cast<std::size_t>(b) * K;
    for (int k = 0; k < K; ++k) lrow[k] = bias[static_cast<std::size_t>(k)];
    const S* xrow = xd + static_cast<std::size_t>(b) * F;
    for (std::size_t f = 0; f < F; ++f) {
      const S a = xrow[f];
      const S* wrow = &w[f * static_cast<std::size_t>(K)];
      for (int k = 0; k < K; ++k) lrow[k] += a * wrow[k];
    }
  }
}

template <typename S>
void dense_backward(const Tensor4<S>& x, const std::vector<S>& w, const Tensor4<S>& grad_logits,
                    Tensor4<S>& grad_x, std::vector<S>& grad_w, std::vector<S>& grad_bias) {
  const int B = x.batch(), K = grad_logits.channels();
  const std::size_t F = x.size() / static_cast<std::size_t>(B);
  const S* xd = x.data();
  const S* gl = grad_logits.data();
  S* gx = grad_x.data();
  for (int b = 0; b < B; ++b) {
    const S* grow = gl + static_cast<std::size_t>(b) * K;
    for (int k = 0; k < K; ++k) grad_bias[static_cast<std::size_t>(k)] += grow[k];
    const S* xrow = xd + static_cast<std::size_t>(b) * F;
    S* gxrow = gx + static_cast<std::size_t>(b) * F;
    for (std::size_t f = 0; f < F; ++f) {
      const S* wrow = &w[f * static_cast<std::size_t>(K)];
      S* gwrow = &grad_w[f * static_cast<std::size_t>(K)];
      const S a = xrow[f];
      S acc = S(0);
      for (int k = 0; k < K; ++k) {
        acc += grow[k] * wrow[k];
        gwrow[k] += a * grow[k];
      }
      gxrow[f] += acc;
    }
  }
}

// Mean cross-entropy of a softmax over the channel axis, numerically
// stabilized by the per-row max. When grad_logits is given it receives
// (softmax - onehot)/batch.
template <typename S>
double softmax_cross_entropy(const Tensor4<S>& logits, const std::vector<int>& labels,
                             Tensor4<S>* grad_logits) {
  const int B = logits.batch(), K = logits.channels();
  if (static_cast<int>(labels.size()) != B)
    throw ShapeMismatch("softmax_cross_entropy: label count");
  const S* ld = logits.data();
  double loss = 0.0;
  std::vector<double> p(static_cast<std::size_t>(K));
  for (int b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= K)
      throw LabelOutOfRange("label " + std::to_string(y) + " outside [0," + std::to_string(K) + ")");
    const S* row = ld + static_cast<std::size_t>(b) * K;
    double mx = row[0];
    for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(row[k]));
    double z = 0.0;
    for (int k = 0; k < K; ++k) {
      p[static_cast<std::size_t>(k)] = std::exp(static_cast<double>(row[k]) - mx);
      z += p[static_cast<std::size_t>(k)];
    }
    loss += std::log(z) - (static_cast<double>(row[y]) - mx);
    if (grad_logits) {
      S* grow = grad_logits->data() + static_cast<std::size_t>(b) * K;
      for (int k = 0; k < K; ++k)
        grow[k] = static_cast<S>((p[static_cast<std::size_t>(k)] / z - (k == y ? 1.0 : 0.0)) / B);
    }
  }
  return loss / B;
}

// Zero-mean normal draws scaled by sqrt(2/fan_in).
template <typename S>
void he_init(std::vector<S>& w, int fan_in, RngStream& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (S& v : w) v = static_cast<S>(rng.normal() * stddev);
}

// ---------------------------------------------------------------------
// graph-node layers

template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual void init(RngStream&) {}
  // `out` is preallocated to the node's inferred shape at batch size.
  virtual void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out,
                       RunMode mode) = 0;
  // Gradients accumulate into grad_in; `out` is the tensor forward produced.
  virtual void backward(const Tensor4<S>& out, const Tensor4<S>& grad_out,
                        const std::vector<const Tensor4<S>*>& in,
                        const std::vector<Tensor4<S>*>& grad_in) = 0;
  virtual std::vector<ParamSlot<S>*> params() { return {}; }
  virtual std::vector<NamedArray<S>> state() { return {}; }
};

inline constexpr double kBnMomentum = 0.9;
inline constexpr double kBnEps = 1e-5;

// Convolution + batch normalization + ReLU. The residual variant adds the
// input back (channel-padded or truncated to the block width) before the
// ReLU; its shortcut carries no parameters.
template <typename S>
class ConvBlockLayer : public Layer<S> {
 public:
  ConvBlockLayer(int kernel, int c_in, int c_out, bool residual)
      : k_(kernel), c_in_(c_in), c_out_(c_out), residual_(residual) {
    w_.configure("conv.w", {k_, k_, c_in_, c_out_});
    b_.configure("conv.b", {c_out_});
    gamma_.configure("bn.gamma", {c_out_});
    beta_.configure("bn.beta", {c_out_});
    running_mean_.assign(static_cast<std::size_t>(c_out_), S(0));
    running_var_.assign(static_cast<std::size_t>(c_out_), S(1));
  }

  void init(RngStream& rng) override {
    he_init(w_.value, k_ * k_ * c_in_, rng);
    std::fill(gamma_.value.begin(), gamma_.value.end(), S(1));
  }

  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode mode) override {
    const Tensor4<S>& x = *in[0];
    if (!conv_out_.same_dims(out)) conv_out_ = Tensor4<S>(out.batch(), out.shape3());
    conv2d_forward(x, w_.value, b_.value, k_, conv_out_);
    batch_norm_forward(conv_out_, gamma_.value, beta_.value, running_mean_, running_var_, mode,
                       kBnMomentum, kBnEps, out, &cache_);
    if (residual_) {
      const int cc = std::min(c_in_, c_out_);
      for (int b = 0; b < out.batch(); ++b)
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j) {
            const S* xrow = &x.at(b, i, j, 0);
            S* orow = &out.at(b, i, j, 0);
            for (int c = 0; c < cc; ++c) orow[c] += xrow[c];
          }
    }
    relu_forward(out, out);
  }

  void backward(const Tensor4<S>& out, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>& in,
                const std::vector<Tensor4<S>*>& grad_in) override {
    const Tensor4<S>& x = *in[0];
    if (!dz_.same_dims(out)) dz_ = Tensor4<S>(out.batch(), out.shape3());
    if (!dconv_.same_dims(out)) dconv_ = Tensor4<S>(out.batch(), out.shape3());
    dz_.fill(S(0));
    relu_backward(out, grad_out, dz_);
    if (residual_) {
      const int cc = std::min(c_in_, c_out_);
      Tensor4<S>& gx = *grad_in[0];
      for (int b = 0; b < out.batch(); ++b)
        for (int i = 0; i < out.rows(); ++i)
          for (int j = 0; j < out.cols(); ++j) {
            const S* dzr = &dz_.at(b, i, j, 0);
            S* gxr = &gx.at(b, i, j, 0);
            for (int c = 0; c < cc; ++c) gxr[c] += dzr[c];
          }
    }
    dconv_.fill(S(0));
    batch_norm_backward(dz_, gamma_.value, cache_, dconv_, gamma_.grad, beta_.grad);
    conv2d_backward(x, w_.value, k_, dconv_, *grad_in[0], w_.grad, b_.grad);
  }

  std::vector<ParamSlot<S>*> params() override { return {&w_, &b_, &gamma_, &beta_}; }
  std::vector<NamedArray<S>> state() override {
    return {{"bn.running_mean", {c_out_}, &running_mean_},
            {"bn.running_var", {c_out_}, &running_var_}};
  }

 private:
  int k_, c_in_, c_out_;
  bool residual_;
  ParamSlot<S> w_, b_, gamma_, beta_;
  std::vector<S> running_mean_, running_var_;
  Tensor4<S> conv_out_, dz_, dconv_;
  BatchNormCache<S> cache_;
};

template <typename S>
class MaxPoolLayer : public Layer<S> {
 public:
  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode) override {
    max_pool_forward(*in[0], 2, 2, 2, 2, out, &argmax_);
  }
  void backward(const Tensor4<S>&, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>&,
                const std::vector<Tensor4<S>*>& grad_in) override {
    max_pool_backward(grad_out, argmax_, *grad_in[0]);
  }

 private:
  std::vector<std::int64_t> argmax_;
};

template <typename S>
class AvgPoolLayer : public Layer<S> {
 public:
  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode) override {
    avg_pool_forward(*in[0], 2, 2, 2, 2, out);
  }
  void backward(const Tensor4<S>&, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>&,
                const std::vector<Tensor4<S>*>& grad_in) override {
    avg_pool_backward(grad_out, 2, 2, 2, 2, *grad_in[0]);
  }
};

// Shared machinery for the binary joins: each operand whose spatial size
// exceeds the target is max-pooled down to it first.
template <typename S>
class JoinLayer : public Layer<S> {
 public:
  JoinLayer(const TensorShape& in0, const TensorShape& in1, const TensorShape& target) {
    shapes_[0] = in0;
    shapes_[1] = in1;
    for (int s = 0; s < 2; ++s) {
      pooled_[s] = shapes_[s].rows != target.rows || shapes_[s].cols != target.cols;
      if (pooled_[s]) {
        row_geo_[s] = alignment_pool(shapes_[s].rows, target.rows);
        col_geo_[s] = alignment_pool(shapes_[s].cols, target.cols);
      }
    }
    target_ = target;
  }

 protected:
  // Returns the operand aligned to the target's spatial size, pooling into
  // the scratch tensor when needed.
  const Tensor4<S>* aligned(int s, const Tensor4<S>& operand) {
    if (!pooled_[s]) return &operand;
    Tensor4<S>& buf = aligned_buf_[s];
    const TensorShape want{target_.rows, target_.cols, shapes_[s].channels};
    if (buf.batch() != operand.batch() || !(buf.shape3() == want))
      buf = Tensor4<S>(operand.batch(), want);
    max_pool_forward(operand, row_geo_[s].kernel, col_geo_[s].kernel, row_geo_[s].stride,
                     col_geo_[s].stride, buf, &argmax_[s]);
    return &buf;
  }

  // Routes a gradient w.r.t. the aligned operand back to the producer.
  void route_back(int s, const Tensor4<S>& grad_aligned, Tensor4<S>& grad_in) {
    if (!pooled_[s]) {
      const S* ga = grad_aligned.data();
      S* gi = grad_in.data();
      for (std::size_t i = 0; i < grad_aligned.size(); ++i) gi[i] += ga[i];
      return;
    }
    max_pool_backward(grad_aligned, argmax_[s], grad_in);
  }

  Tensor4<S>& grad_buffer(int s, int batch) {
    const TensorShape want{target_.rows, target_.cols, shapes_[s].channels};
    Tensor4<S>& buf = grad_buf_[s];
    if (buf.batch() != batch || !(buf.shape3() == want)) buf = Tensor4<S>(batch, want);
    else buf.fill(S(0));
    return buf;
  }

  TensorShape shapes_[2], target_;
  bool pooled_[2] = {false, false};
  PoolGeometry row_geo_[2], col_geo_[2];
  Tensor4<S> aligned_buf_[2], grad_buf_[2];
  std::vector<std::int64_t> argmax_[2];
};

template <typename S>
class SumLayer : public JoinLayer<S> {
 public:
  using JoinLayer<S>::JoinLayer;

  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode) override {
    padded_sum(*this->aligned(0, *in[0]), *this->aligned(1, *in[1]), out);
  }
  void backward(const Tensor4<S>&, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>& in,
                const std::vector<Tensor4<S>*>& grad_in) override {
    Tensor4<S>& g0 = this->grad_buffer(0, in[0]->batch());
    Tensor4<S>& g1 = this->grad_buffer(1, in[1]->batch());
    padded_sum_backward(grad_out, g0, g1);
    this->route_back(0, g0, *grad_in[0]);
    this->route_back(1, g1, *grad_in[1]);
  }
};

template <typename S>
class ConcatLayer : public JoinLayer<S> {
 public:
  using JoinLayer<S>::JoinLayer;

  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode) override {
    channel_concat(*this->aligned(0, *in[0]), *this->aligned(1, *in[1]), out);
  }
  void backward(const Tensor4<S>&, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>& in,
                const std::vector<Tensor4<S>*>& grad_in) override {
    Tensor4<S>& g0 = this->grad_buffer(0, in[0]->batch());
    Tensor4<S>& g1 = this->grad_buffer(1, in[1]->batch());
    concat_backward(grad_out, g0, g1);
    this->route_back(0, g0, *grad_in[0]);
    this->route_back(1, g1, *grad_in[1]);
  }
};

// Classifier head: flatten, fully connected to class logits. The softmax
// itself lives in the loss and in predict().
template <typename S>
class DenseLayer : public Layer<S> {
 public:
  DenseLayer(std::int64_t flat_in, int classes)
      : flat_in_(flat_in), classes_(classes) {
    w_.configure("fc.w", {static_cast<int>(flat_in), classes});
    b_.configure("fc.b", {classes});
  }

  void init(RngStream& rng) override { he_init(w_.value, static_cast<int>(flat_in_), rng); }

  void forward(const std::vector<const Tensor4<S>*>& in, Tensor4<S>& out, RunMode) override {
    dense_forward(*in[0], w_.value, b_.value, out);
  }
  void backward(const Tensor4<S>&, const Tensor4<S>& grad_out,
                const std::vector<const Tensor4<S>*>& in,
                const std::vector<Tensor4<S>*>& grad_in) override {
    dense_backward(*in[0], w_.value, grad_out, *grad_in[0], w_.grad, b_.grad);
  }
  std::vector<ParamSlot<S>*> params() override { return {&w_, &b_}; }

 private:
  std::int64_t flat_in_;
  int classes_;
  ParamSlot<S> w_, b_;
};

// Layer for one shaped graph node. Input nodes have no layer.
template <typename S>
std::unique_ptr<Layer<S>> make_layer(const GraphNode& node, const TensorShape& in0,
                                     const TensorShape& in1, int classes) {
  if (node.kind == GraphNodeKind::Output)
    return std::make_unique<DenseLayer<S>>(in0.elements(), classes);
  switch (node.fn.kind) {
    case FunctionKind::ConvBlock:
      return std::make_unique<ConvBlockLayer<S>>(node.fn.kernel, in0.channels,
                                                 node.fn.out_channels, false);
    case FunctionKind::ResBlock:
      return std::make_unique<ConvBlockLayer<S>>(node.fn.kernel, in0.channels,
                                                 node.fn.out_channels, true);
    case FunctionKind::MaxPool: return std::make_unique<MaxPoolLayer<S>>();
    case FunctionKind::AvgPool: return std::make_unique<AvgPoolLayer<S>>();
    case FunctionKind::Sum: return std::make_unique<SumLayer<S>>(in0, in1, node.shape);
    case FunctionKind::Concat: return std::make_unique<ConcatLayer<S>>(in0, in1, node.shape);
  }
  throw std::logic_error("make_layer: unhandled node kind");
}

}  // namespace cgpnas
