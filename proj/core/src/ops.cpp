// Copyright 2026 The dweNet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dwenet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

namespace dwenet::ops {

namespace {

// View of a [C, S] or [B, C, S] feature map.
struct MapLayout {
  std::size_t batch = 1;
  std::size_t channels = 0;
  std::size_t signal = 0;
  bool batched = false;

  Shape shape_with(std::size_t c, std::size_t s) const {
    return batched ? Shape{batch, c, s} : Shape{c, s};
  }
};

template <typename T>
MapLayout layout_of(const BasicTensor<T>& x, const char* op) {
  if (!x.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  const auto& s = x.shape();
  if (s.rank() == 2) return {1, s[0], s[1], false};
  if (s.rank() == 3) return {s[0], s[1], s[2], true};
  throw ShapeError(std::string(op) + ": expected [C, S] or [B, C, S], got " +
                   s.str());
}

template <typename T>
void require_vector(const BasicTensor<T>& v, std::size_t n, const char* op,
                    const char* what) {
  if (!v.defined() || v.rank() != 1 || v.dim(0) != n) {
    throw ShapeError(std::string(op) + ": " + what + " must have shape (" +
                     std::to_string(n) + ")" +
                     (v.defined() ? ", got " + v.shape().str() : ""));
  }
}

// Accumulates into an input's grad if it participates in differentiation.
template <typename T, typename Fn>
void with_grad(detail::Node<T>& self, std::size_t input, Fn&& fn) {
  auto& in = *self.inputs[input];
  if (in.requires_grad) fn(in.ensure_grad(), in.value);
}

// Signal positions t for which t + offset lands in [0, S).
struct TapRange {
  std::size_t begin;
  std::size_t end;
};

inline TapRange tap_range(std::size_t out_len, std::size_t in_len,
                          std::ptrdiff_t offset) {
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -offset);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(
      static_cast<std::ptrdiff_t>(out_len),
      static_cast<std::ptrdiff_t>(in_len) - offset);
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

struct ConvDims {
  std::size_t batch, c_in, signal, c_out, width, pad, out_len;
};

// y += conv(x, k); y is [B, C_out, out_len].
template <typename T>
void conv_forward(const ConvDims& d, const T* x, const T* k, T* y) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.c_out; ++o) {
      T* yrow = y + (b * d.c_out + o) * d.out_len;
      for (std::size_t c = 0; c < d.c_in; ++c) {
        const T* xrow = x + (b * d.c_in + c) * d.signal;
        const T* krow = k + (o * d.c_in + c) * d.width;
        for (std::size_t f = 0; f < d.width; ++f) {
          const T w = krow[f];
          const auto off = static_cast<std::ptrdiff_t>(f) -
                           static_cast<std::ptrdiff_t>(d.pad);
          const auto r = tap_range(d.out_len, d.signal, off);
          for (std::size_t t = r.begin; t < r.end; ++t)
            yrow[t] += w * xrow[static_cast<std::ptrdiff_t>(t) + off];
        }
      }
    }
  }
}

template <typename T>
void conv_backward_input(const ConvDims& d, const T* dy, const T* k, T* dx) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.c_out; ++o) {
      const T* dyrow = dy + (b * d.c_out + o) * d.out_len;
      for (std::size_t c = 0; c < d.c_in; ++c) {
        T* dxrow = dx + (b * d.c_in + c) * d.signal;
        const T* krow = k + (o * d.c_in + c) * d.width;
        for (std::size_t f = 0; f < d.width; ++f) {
          const T w = krow[f];
          const auto off = static_cast<std::ptrdiff_t>(f) -
                           static_cast<std::ptrdiff_t>(d.pad);
          const auto r = tap_range(d.out_len, d.signal, off);
          for (std::size_t t = r.begin; t < r.end; ++t)
            dxrow[static_cast<std::ptrdiff_t>(t) + off] += w * dyrow[t];
        }
      }
    }
  }
}

template <typename T>
void conv_backward_kernel(const ConvDims& d, const T* dy, const T* x, T* dk) {
  for (std::size_t b = 0; b < d.batch; ++b) {
    for (std::size_t o = 0; o < d.c_out; ++o) {
      const T* dyrow = dy + (b * d.c_out + o) * d.out_len;
      for (std::size_t c = 0; c < d.c_in; ++c) {
        const T* xrow = x + (b * d.c_in + c) * d.signal;
        T* dkrow = dk + (o * d.c_in + c) * d.width;
        for (std::size_t f = 0; f < d.width; ++f) {
          const auto off = static_cast<std::ptrdiff_t>(f) -
                           static_cast<std::ptrdiff_t>(d.pad);
          const auto r = tap_range(d.out_len, d.signal, off);
          T acc = 0;
          for (std::size_t t = r.begin; t < r.end; ++t)
            acc += dyrow[t] * xrow[static_cast<std::ptrdiff_t>(t) + off];
          dkrow[f] += acc;
        }
      }
    }
  }
}

template <typename T>
BasicTensor<T> conv_impl(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                         const BasicTensor<T>* bias, std::size_t pad) {
  const auto in = layout_of(x, "conv_seq");
  if (!kernel.defined() || kernel.rank() != 3) {
    throw ShapeError("conv_seq: kernel must be [C_out, C_in, F]");
  }
  const std::size_t c_out = kernel.dim(0);
  const std::size_t width = kernel.dim(2);
  if (kernel.dim(1) != in.channels) {
    throw ShapeError("conv_seq: kernel expects " +
                     std::to_string(kernel.dim(1)) + " input channels, got " +
                     std::to_string(in.channels));
  }
  if (width > in.signal + 2 * pad) {
    throw ShapeError("conv_seq: kernel width " + std::to_string(width) +
                     " exceeds padded signal " +
                     std::to_string(in.signal + 2 * pad));
  }
  if (bias) require_vector(*bias, c_out, "conv_seq", "bias");

  const ConvDims d{in.batch, in.channels, in.signal, c_out,
                   width,    pad,         in.signal + 2 * pad - width + 1};
  std::vector<T> y(d.batch * c_out * d.out_len, T(0));
  if (bias) {
    const auto bv = bias->data();
    for (std::size_t b = 0; b < d.batch; ++b)
      for (std::size_t o = 0; o < c_out; ++o)
        std::fill_n(y.begin() + (b * c_out + o) * d.out_len, d.out_len, bv[o]);
  }
  conv_forward(d, x.data().data(), kernel.data().data(), y.data());

  std::vector<BasicTensor<T>> inputs{x, kernel};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return make_result<T>(
      in.shape_with(c_out, d.out_len), std::move(y), std::move(inputs),
      "conv_seq", [d, has_bias](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        const auto& xv = self.inputs[0]->value;
        const auto& kv = self.inputs[1]->value;
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          conv_backward_input(d, dy, kv.data(), dx.data());
        });
        with_grad(self, 1, [&](std::vector<T>& dk, const std::vector<T>&) {
          conv_backward_kernel(d, dy, xv.data(), dk.data());
        });
        if (has_bias) {
          with_grad(self, 2, [&](std::vector<T>& db, const std::vector<T>&) {
            for (std::size_t b = 0; b < d.batch; ++b)
              for (std::size_t o = 0; o < d.c_out; ++o) {
                const T* row = dy + (b * d.c_out + o) * d.out_len;
                T acc = 0;
                for (std::size_t t = 0; t < d.out_len; ++t) acc += row[t];
                db[o] += acc;
              }
          });
        }
      });
}

}  // namespace

template <typename T>
BasicTensor<T> concat_channels(std::span<const BasicTensor<T>> xs) {
  if (xs.empty()) throw ShapeError("concat_channels: empty input list");
  const auto first = layout_of(xs[0], "concat_channels");
  std::vector<std::size_t> offsets;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& x : xs) {
    const auto l = layout_of(x, "concat_channels");
    if (l.batched != first.batched || l.batch != first.batch ||
        l.signal != first.signal) {
      throw ShapeError("concat_channels: cannot stack " + x.shape().str() +
                       " onto " + xs[0].shape().str());
    }
    offsets.push_back(total);
    widths.push_back(l.channels);
    total += l.channels;
  }
  const std::size_t S = first.signal;
  std::vector<T> y(first.batch * total * S);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto src = xs[i].data();
    for (std::size_t b = 0; b < first.batch; ++b) {
      std::copy_n(src.begin() + b * widths[i] * S, widths[i] * S,
                  y.begin() + (b * total + offsets[i]) * S);
    }
  }
  std::vector<BasicTensor<T>> inputs(xs.begin(), xs.end());
  const std::size_t batch = first.batch;
  return make_result<T>(
      first.shape_with(total, S), std::move(y), std::move(inputs),
      "concat_channels",
      [offsets, widths, total, S, batch](detail::Node<T>& self) {
        for (std::size_t i = 0; i < offsets.size(); ++i) {
          with_grad(self, i, [&](std::vector<T>& g, const std::vector<T>&) {
            for (std::size_t b = 0; b < batch; ++b) {
              const T* src = self.grad.data() + (b * total + offsets[i]) * S;
              T* dst = g.data() + b * widths[i] * S;
              for (std::size_t j = 0; j < widths[i] * S; ++j) dst[j] += src[j];
            }
          });
        }
      });
}

template <typename T>
BasicTensor<T> slice_channels(const BasicTensor<T>& x, std::size_t begin,
                              std::size_t count) {
  const auto l = layout_of(x, "slice_channels");
  if (count == 0 || begin + count > l.channels) {
    throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") out of " +
                     std::to_string(l.channels) + " channels");
  }
  const std::size_t S = l.signal;
  std::vector<T> y(l.batch * count * S);
  const auto src = x.data();
  for (std::size_t b = 0; b < l.batch; ++b) {
    std::copy_n(src.begin() + (b * l.channels + begin) * S, count * S,
                y.begin() + b * count * S);
  }
  return make_result<T>(
      l.shape_with(count, S), std::move(y), {x}, "slice_channels",
      [l, begin, count, S](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& g, const std::vector<T>&) {
          for (std::size_t b = 0; b < l.batch; ++b) {
            const T* src = self.grad.data() + b * count * S;
            T* dst = g.data() + (b * l.channels + begin) * S;
            for (std::size_t j = 0; j < count * S; ++j) dst[j] += src[j];
          }
        });
      });
}

template <typename T>
BasicTensor<T> conv_seq(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                        std::size_t pad) {
  return conv_impl<T>(x, kernel, nullptr, pad);
}

template <typename T>
BasicTensor<T> conv_seq(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                        const BasicTensor<T>& bias, std::size_t pad) {
  return conv_impl<T>(x, kernel, &bias, pad);
}

template <typename T>
BasicTensor<T> conv_span(const BasicTensor<T>& x, const BasicTensor<T>& kernel,
                         std::size_t seq_pad, std::size_t emb_pad) {
  if (!x.defined() || x.rank() != 3) {
    throw ShapeError("conv_span: input must be [B, S, D]");
  }
  if (!kernel.defined() || kernel.rank() != 3) {
    throw ShapeError("conv_span: kernel must be [C_out, F, D + 2*pad]");
  }
  const std::size_t B = x.dim(0), S = x.dim(1), D = x.dim(2);
  const std::size_t c_out = kernel.dim(0), F = kernel.dim(1),
                    W = kernel.dim(2);
  if (W != D + 2 * emb_pad) {
    throw ShapeError("conv_span: kernel spans " + std::to_string(W) +
                     " embedding columns but padded input has " +
                     std::to_string(D + 2 * emb_pad));
  }
  if (F > S + 2 * seq_pad) {
    throw ShapeError("conv_span: kernel height exceeds padded signal");
  }
  // Transpose to [B, D, S] and gather interior kernel columns as
  // [C_out, D, F]; padded embedding columns only ever meet zeros.
  auto xt = std::make_shared<std::vector<T>>(B * D * S);
  const auto xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t j = 0; j < D; ++j)
        (*xt)[(b * D + j) * S + s] = xv[(b * S + s) * D + j];
  auto kt = std::make_shared<std::vector<T>>(c_out * D * F);
  const auto kv = kernel.data();
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t r = 0; r < F; ++r)
      for (std::size_t j = 0; j < D; ++j)
        (*kt)[(o * D + j) * F + r] = kv[(o * F + r) * W + j + emb_pad];

  const ConvDims d{B, D, S, c_out, F, seq_pad, S + 2 * seq_pad - F + 1};
  std::vector<T> y(B * c_out * d.out_len, T(0));
  conv_forward(d, xt->data(), kt->data(), y.data());

  return make_result<T>(
      Shape{B, c_out, d.out_len}, std::move(y), {x, kernel}, "conv_span",
      [d, xt, kt, W, emb_pad](detail::Node<T>& self) {
        const T* dy = self.grad.data();
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          std::vector<T> dxt(d.batch * d.c_in * d.signal, T(0));
          conv_backward_input(d, dy, kt->data(), dxt.data());
          for (std::size_t b = 0; b < d.batch; ++b)
            for (std::size_t s = 0; s < d.signal; ++s)
              for (std::size_t j = 0; j < d.c_in; ++j)
                dx[(b * d.signal + s) * d.c_in + j] +=
                    dxt[(b * d.c_in + j) * d.signal + s];
        });
        with_grad(self, 1, [&](std::vector<T>& dk, const std::vector<T>&) {
          std::vector<T> dkt(d.c_out * d.c_in * d.width, T(0));
          conv_backward_kernel(d, dy, xt->data(), dkt.data());
          for (std::size_t o = 0; o < d.c_out; ++o)
            for (std::size_t r = 0; r < d.width; ++r)
              for (std::size_t j = 0; j < d.c_in; ++j)
                dk[(o * d.width + r) * W + j + emb_pad] +=
                    dkt[(o * d.c_in + j) * d.width + r];
        });
      });
}

template <typename T>
BatchNormState<T> BatchNormState<T>::make(std::size_t channels) {
  BatchNormState s;
  s.running_mean = BasicTensor<T>::zeros(Shape{channels});
  s.running_var = BasicTensor<T>::full(Shape{channels}, T(1));
  return s;
}

template <typename T>
BasicTensor<T> batchnorm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, BatchNormState<T>& state,
                         Mode mode) {
  const auto l = layout_of(x, "batchnorm");
  const std::size_t C = l.channels, S = l.signal, B = l.batch;
  require_vector(gamma, C, "batchnorm", "gamma");
  require_vector(beta, C, "batchnorm", "beta");
  require_vector(state.running_mean, C, "batchnorm", "running mean");
  require_vector(state.running_var, C, "batchnorm", "running var");
  const std::size_t N = B * S;
  const bool train = mode == Mode::kTrain;
  if (train && N < 2) {
    throw ShapeError("batchnorm: train mode needs more than one value per "
                     "channel, got batch*signal = " + std::to_string(N));
  }

  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  auto xhat = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<T>>(C);
  std::vector<T> y(xv.size());

  for (std::size_t c = 0; c < C; ++c) {
    T mean, var;
    if (train) {
      double acc = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) acc += xv[(b * C + c) * S + s];
      const double m = acc / static_cast<double>(N);
      double sq = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t s = 0; s < S; ++s) {
          const double dlt = xv[(b * C + c) * S + s] - m;
          sq += dlt * dlt;
        }
      const double biased = sq / static_cast<double>(N);
      const double unbiased = sq / static_cast<double>(N - 1);
      mean = static_cast<T>(m);
      var = static_cast<T>(biased);
      auto rm = state.running_mean.mutable_data();
      auto rv = state.running_var.mutable_data();
      const T mom = static_cast<T>(state.momentum);
      rm[c] = (T(1) - mom) * rm[c] + mom * static_cast<T>(m);
      rv[c] = (T(1) - mom) * rv[c] + mom * static_cast<T>(unbiased);
    } else {
      mean = state.running_mean.data()[c];
      var = state.running_var.data()[c];
    }
    const T is = T(1) / std::sqrt(var + static_cast<T>(state.eps));
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = (b * C + c) * S + s;
        const T h = (xv[i] - mean) * is;
        (*xhat)[i] = h;
        y[i] = gv[c] * h + bv[c];
      }
  }

  return make_result<T>(
      x.shape(), std::move(y), {x, gamma, beta}, "batchnorm",
      [xhat, inv_std, B, C, S, N, train](detail::Node<T>& self) {
        const auto& dy = self.grad;
        const auto& g = self.inputs[1]->value;
        std::vector<T> sum_dy(C, T(0)), sum_dy_xhat(C, T(0));
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < S; ++s) {
              const std::size_t i = (b * C + c) * S + s;
              sum_dy[c] += dy[i];
              sum_dy_xhat[c] += dy[i] * (*xhat)[i];
            }
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          const T n = static_cast<T>(N);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const T k = g[c] * (*inv_std)[c];
              for (std::size_t s = 0; s < S; ++s) {
                const std::size_t i = (b * C + c) * S + s;
                if (train) {
                  dx[i] += k / n *
                           (n * dy[i] - sum_dy[c] - (*xhat)[i] * sum_dy_xhat[c]);
                } else {
                  dx[i] += k * dy[i];
                }
              }
            }
        });
        with_grad(self, 1, [&](std::vector<T>& dg, const std::vector<T>&) {
          for (std::size_t c = 0; c < C; ++c) dg[c] += sum_dy_xhat[c];
        });
        with_grad(self, 2, [&](std::vector<T>& db, const std::vector<T>&) {
          for (std::size_t c = 0; c < C; ++c) db[c] += sum_dy[c];
        });
      });
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x, double slope) {
  const T a = static_cast<T>(slope);
  const auto xv = x.data();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0 ? xv[i] : a * xv[i];
  return make_result<T>(
      x.shape(), std::move(y), {x}, slope == 0 ? "relu" : "leaky_relu",
      [a](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>& xv) {
          // Derivative 1 only for x > 0; x == 0 takes the slope side.
          for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] += xv[i] > 0 ? self.grad[i] : a * self.grad[i];
        });
      });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return leaky_relu(x, 0.0);
}

template <typename T>
BasicTensor<T> activation(const BasicTensor<T>& x, Activation kind,
                          double slope) {
  return kind == Activation::kRelu ? relu(x) : leaky_relu(x, slope);
}

template <typename T>
BasicTensor<T> pool(const BasicTensor<T>& x, Pool kind) {
  const auto l = layout_of(x, "pool");
  const std::size_t B = l.batch, C = l.channels, S = l.signal;
  const auto xv = x.data();
  if (kind == Pool::kAvgK2) {
    const std::size_t out = S / 2;
    if (out == 0) {
      throw ShapeError("pool: kernel-2 average needs signal >= 2, got " +
                       std::to_string(S));
    }
    std::vector<T> y(B * C * out);
    for (std::size_t r = 0; r < B * C; ++r)
      for (std::size_t t = 0; t < out; ++t)
        y[r * out + t] = (xv[r * S + 2 * t] + xv[r * S + 2 * t + 1]) / T(2);
    return make_result<T>(
        l.shape_with(C, out), std::move(y), {x}, "avg_pool2",
        [B, C, S, out](detail::Node<T>& self) {
          with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
            for (std::size_t r = 0; r < B * C; ++r)
              for (std::size_t t = 0; t < out; ++t) {
                const T g = self.grad[r * out + t] / T(2);
                dx[r * S + 2 * t] += g;
                dx[r * S + 2 * t + 1] += g;
              }
          });
        });
  }

  std::vector<T> y(B * C);
  if (kind == Pool::kGlobalMax) {
    auto argmax = std::make_shared<std::vector<std::size_t>>(B * C);
    for (std::size_t r = 0; r < B * C; ++r) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < S; ++t)
        if (xv[r * S + t] > xv[r * S + best]) best = t;
      (*argmax)[r] = best;
      y[r] = xv[r * S + best];
    }
    return make_result<T>(
        l.shape_with(C, 1), std::move(y), {x}, "global_max_pool",
        [argmax, S](detail::Node<T>& self) {
          with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
            for (std::size_t r = 0; r < argmax->size(); ++r)
              dx[r * S + (*argmax)[r]] += self.grad[r];
          });
        });
  }

  for (std::size_t r = 0; r < B * C; ++r) {
    T acc = 0;
    for (std::size_t t = 0; t < S; ++t) acc += xv[r * S + t];
    y[r] = acc / static_cast<T>(S);
  }
  return make_result<T>(
      l.shape_with(C, 1), std::move(y), {x}, "global_avg_pool",
      [S](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          for (std::size_t r = 0; r < self.grad.size(); ++r) {
            const T g = self.grad[r] / static_cast<T>(S);
            for (std::size_t t = 0; t < S; ++t) dx[r * S + t] += g;
          }
        });
      });
}

template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  if (!x.defined() || (x.rank() != 1 && x.rank() != 2)) {
    throw ShapeError("affine: input must be [n_in] or [B, n_in]");
  }
  if (!weight.defined() || weight.rank() != 2) {
    throw ShapeError("affine: weight must be [n_out, n_in]");
  }
  const bool batched = x.rank() == 2;
  const std::size_t B = batched ? x.dim(0) : 1;
  const std::size_t n_in = x.shape().back();
  const std::size_t n_out = weight.dim(0);
  if (weight.dim(1) != n_in) {
    throw ShapeError("affine: weight " + weight.shape().str() +
                     " does not accept " + std::to_string(n_in) + " inputs");
  }
  require_vector(bias, n_out, "affine", "bias");
  const auto xv = x.data();
  const auto wv = weight.data();
  const auto bv = bias.data();
  std::vector<T> y(B * n_out);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < n_out; ++o) {
      T acc = bv[o];
      const T* wr = wv.data() + o * n_in;
      const T* xr = xv.data() + b * n_in;
      for (std::size_t i = 0; i < n_in; ++i) acc += wr[i] * xr[i];
      y[b * n_out + o] = acc;
    }
  Shape shape = batched ? Shape{B, n_out} : Shape{n_out};
  return make_result<T>(
      std::move(shape), std::move(y), {x, weight, bias}, "affine",
      [B, n_in, n_out](detail::Node<T>& self) {
        const auto& dy = self.grad;
        const auto& xv = self.inputs[0]->value;
        const auto& wv = self.inputs[1]->value;
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < n_out; ++o) {
              const T g = dy[b * n_out + o];
              const T* wr = wv.data() + o * n_in;
              T* dr = dx.data() + b * n_in;
              for (std::size_t i = 0; i < n_in; ++i) dr[i] += g * wr[i];
            }
        });
        with_grad(self, 1, [&](std::vector<T>& dw, const std::vector<T>&) {
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < n_out; ++o) {
              const T g = dy[b * n_out + o];
              const T* xr = xv.data() + b * n_in;
              T* dr = dw.data() + o * n_in;
              for (std::size_t i = 0; i < n_in; ++i) dr[i] += g * xr[i];
            }
        });
        with_grad(self, 2, [&](std::vector<T>& db, const std::vector<T>&) {
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t o = 0; o < n_out; ++o) db[o] += dy[b * n_out + o];
        });
      });
}

template <typename T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double rate, Mode mode,
                       Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ConfigError("dropout: rate must lie in [0, 1), got " +
                      std::to_string(rate));
  }
  if (mode == Mode::kEval || rate == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto mask = std::make_shared<std::vector<T>>(x.numel());
  const auto xv = x.data();
  std::vector<T> y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    (*mask)[i] = u(rng) >= rate ? keep_scale : T(0);
    y[i] = xv[i] * (*mask)[i];
  }
  return make_result<T>(
      x.shape(), std::move(y), {x}, "dropout", [mask](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& dx, const std::vector<T>&) {
          for (std::size_t i = 0; i < dx.size(); ++i)
            dx[i] += self.grad[i] * (*mask)[i];
        });
      });
}

namespace {

template <typename T>
std::pair<std::size_t, std::size_t> logits_dims(const BasicTensor<T>& logits) {
  if (!logits.defined() || (logits.rank() != 1 && logits.rank() != 2)) {
    throw ShapeError("softmax: logits must be [C] or [B, C]");
  }
  if (logits.rank() == 1) return {1, logits.dim(0)};
  return {logits.dim(0), logits.dim(1)};
}

template <typename T>
std::vector<T> softmax_rows(std::span<const T> z, std::size_t B,
                            std::size_t C) {
  std::vector<T> p(B * C);
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = z.data() + b * C;
    const T mx = *std::max_element(row, row + C);
    T total = 0;
    for (std::size_t c = 0; c < C; ++c) {
      p[b * C + c] = std::exp(row[c] - mx);
      total += p[b * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) p[b * C + c] /= total;
  }
  return p;
}

}  // namespace

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  const auto [B, C] = logits_dims(logits);
  return BasicTensor<T>(logits.shape(), softmax_rows<T>(logits.data(), B, C));
}

template <typename T>
CrossEntropy<T> softmax_cross_entropy(const BasicTensor<T>& logits,
                                      std::span<const int> labels) {
  const auto [B, C] = logits_dims(logits);
  if (labels.size() != B) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(B) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(y) +
                      " outside [0, " + std::to_string(C) + ")");
    }
  }
  const auto z = logits.data();
  auto probs = std::make_shared<std::vector<T>>(softmax_rows<T>(z, B, C));
  T loss = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const T* row = z.data() + b * C;
    const T mx = *std::max_element(row, row + C);
    T total = 0;
    for (std::size_t c = 0; c < C; ++c) total += std::exp(row[c] - mx);
    loss += std::log(total) + mx - row[labels[b]];
  }
  loss /= static_cast<T>(B);
  std::vector<int> ys(labels.begin(), labels.end());
  CrossEntropy<T> out;
  out.probabilities = BasicTensor<T>(logits.shape(), *probs);
  out.loss = make_result<T>(
      Shape{1}, {loss}, {logits}, "softmax_cross_entropy",
      [probs, ys, B, C](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& dz, const std::vector<T>&) {
          const T g = self.grad[0] / static_cast<T>(B);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
              const T onehot = static_cast<std::size_t>(ys[b]) == c ? T(1) : T(0);
              dz[b * C + c] += g * ((*probs)[b * C + c] - onehot);
            }
        });
      });
  return out;
}

template <typename T>
BasicTensor<T> embedding(std::span<const std::int32_t> ids, std::size_t batch,
                         std::size_t seq_len, const BasicTensor<T>& table,
                         std::int32_t pad_id) {
  if (!table.defined() || table.rank() != 2) {
    throw ShapeError("embedding: table must be [V, D]");
  }
  if (ids.size() != batch * seq_len) {
    throw ShapeError("embedding: " + std::to_string(ids.size()) +
                     " ids for a [" + std::to_string(batch) + ", " +
                     std::to_string(seq_len) + "] batch");
  }
  const std::size_t V = table.dim(0), D = table.dim(1);
  const auto tv = table.data();
  std::vector<T> y(ids.size() * D);
  for (std::size_t p = 0; p < ids.size(); ++p) {
    const auto id = ids[p];
    if (id < 0 || static_cast<std::size_t>(id) >= V) {
      throw DataError("embedding: token id " + std::to_string(id) +
                      " outside vocabulary of " + std::to_string(V));
    }
    std::copy_n(tv.begin() + id * D, D, y.begin() + p * D);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return make_result<T>(
      Shape{batch, seq_len, D}, std::move(y), {table}, "embedding",
      [saved = std::move(saved), D, pad_id](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& dt, const std::vector<T>&) {
          for (std::size_t p = 0; p < saved.size(); ++p) {
            if (saved[p] == pad_id) continue;
            T* row = dt.data() + saved[p] * D;
            const T* g = self.grad.data() + p * D;
            for (std::size_t j = 0; j < D; ++j) row[j] += g[j];
          }
        });
      });
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: " + a.shape().str() + " vs " + b.shape().str());
  }
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(y), {a, b}, "add",
                        [](detail::Node<T>& self) {
                          for (std::size_t k = 0; k < 2; ++k)
                            with_grad(self, k, [&](std::vector<T>& g,
                                                   const std::vector<T>&) {
                              for (std::size_t i = 0; i < g.size(); ++i)
                                g[i] += self.grad[i];
                            });
                        });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: " + a.shape().str() + " vs " + b.shape().str());
  }
  std::vector<T> y(a.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] * b.data()[i];
  return make_result<T>(
      a.shape(), std::move(y), {a, b}, "mul", [](detail::Node<T>& self) {
        const auto& av = self.inputs[0]->value;
        const auto& bv = self.inputs[1]->value;
        with_grad(self, 0, [&](std::vector<T>& g, const std::vector<T>&) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
        });
        with_grad(self, 1, [&](std::vector<T>& g, const std::vector<T>&) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
        });
      });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.data()[i] * factor;
  return make_result<T>(
      x.shape(), std::move(y), {x}, "scale", [factor](detail::Node<T>& self) {
        with_grad(self, 0, [&](std::vector<T>& g, const std::vector<T>&) {
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
        });
      });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return make_result<T>(Shape{1}, {acc}, {x}, "sum", [](detail::Node<T>& self) {
    with_grad(self, 0, [&](std::vector<T>& g, const std::vector<T>&) {
      for (auto& v : g) v += self.grad[0];
    });
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: " + x.shape().str() + " to " + shape.str());
  }
  std::vector<T> y(x.data().begin(), x.data().end());
  return make_result<T>(std::move(shape), std::move(y), {x}, "reshape",
                        [](detail::Node<T>& self) {
                          with_grad(self, 0, [&](std::vector<T>& g,
                                                 const std::vector<T>&) {
                            for (std::size_t i = 0; i < g.size(); ++i)
                              g[i] += self.grad[i];
                          });
                        });
}

#define DWENET_INSTANTIATE_OPS(T)                                              \
  template BasicTensor<T> concat_channels<T>(std::span<const BasicTensor<T>>); \
  template BasicTensor<T> slice_channels<T>(const BasicTensor<T>&,             \
                                            std::size_t, std::size_t);         \
  template BasicTensor<T> conv_seq<T>(const BasicTensor<T>&,                   \
                                      const BasicTensor<T>&, std::size_t);     \
  template BasicTensor<T> conv_seq<T>(const BasicTensor<T>&,                   \
                                      const BasicTensor<T>&,                   \
                                      const BasicTensor<T>&, std::size_t);     \
  template BasicTensor<T> conv_span<T>(const BasicTensor<T>&,                  \
                                       const BasicTensor<T>&, std::size_t,     \
                                       std::size_t);                           \
  template struct BatchNormState<T>;                                           \
  template BasicTensor<T> batchnorm<T>(                                        \
      const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,     \
      BatchNormState<T>&, Mode);                                               \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                      \
  template BasicTensor<T> leaky_relu<T>(const BasicTensor<T>&, double);        \
  template BasicTensor<T> activation<T>(const BasicTensor<T>&, Activation,     \
                                        double);                               \
  template BasicTensor<T> pool<T>(const BasicTensor<T>&, Pool);                \
  template BasicTensor<T> affine<T>(const BasicTensor<T>&,                     \
                                    const BasicTensor<T>&,                     \
                                    const BasicTensor<T>&);                    \
  template BasicTensor<T> dropout<T>(const BasicTensor<T>&, double, Mode,      \
                                     Rng&);                                    \
  template BasicTensor<T> softmax<T>(const BasicTensor<T>&);                   \
  template CrossEntropy<T> softmax_cross_entropy<T>(const BasicTensor<T>&,     \
                                                    std::span<const int>);     \
  template BasicTensor<T> embedding<T>(std::span<const std::int32_t>,          \
                                       std::size_t, std::size_t,               \
                                       const BasicTensor<T>&, std::int32_t);   \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> mul<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                  \
  template BasicTensor<T> sum<T>(const BasicTensor<T>&);                       \
  template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);

DWENET_INSTANTIATE_OPS(float)
DWENET_INSTANTIATE_OPS(double)

#undef DWENET_INSTANTIATE_OPS

}  // namespace dwenet::ops
