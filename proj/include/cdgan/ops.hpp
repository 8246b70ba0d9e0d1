#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>

#include "cdgan/graph.hpp"
#include "cdgan/tensor.hpp"

// Differentiable primitives recorded on a Graph. Convolutions lower to a
// batched im2col + GEMM; the column matrix is (C*k*k) x (N*Ho*Wo) row-major.
namespace cdgan::ops {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Sliding-window geometry over an image of (channels, height, width).
struct Window {
  int channels;
  int height;
  int width;
  int kernel;
  int stride;
  int pad;

  [[nodiscard]] int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  [[nodiscard]] int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  [[nodiscard]] int rows() const { return channels * kernel * kernel; }
};

template <typename T>
void im2col(const T* img, int batch, const Window& win, T* cols) {
  const int oh_n = win.out_h();
  const int ow_n = win.out_w();
  const std::size_t positions = static_cast<std::size_t>(oh_n) * ow_n;
  const std::size_t row_len = positions * batch;
  const std::size_t img_size = static_cast<std::size_t>(win.channels) * win.height * win.width;
  for (int c = 0; c < win.channels; ++c) {
    for (int ki = 0; ki < win.kernel; ++ki) {
      for (int kj = 0; kj < win.kernel; ++kj) {
        T* row = cols + static_cast<std::size_t>((c * win.kernel + ki) * win.kernel + kj) * row_len;
        for (int n = 0; n < batch; ++n) {
          const T* plane = img + n * img_size + static_cast<std::size_t>(c) * win.height * win.width;
          T* dst = row + n * positions;
          for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * win.stride - win.pad + ki;
            T* out = dst + static_cast<std::size_t>(oh) * ow_n;
            if (ih < 0 || ih >= win.height) {
              std::fill(out, out + ow_n, T(0));
              continue;
            }
            const T* src = plane + static_cast<std::size_t>(ih) * win.width;
            for (int ow = 0; ow < ow_n; ++ow) {
              const int iw = ow * win.stride - win.pad + kj;
              out[ow] = (iw >= 0 && iw < win.width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image.
template <typename T>
void col2im(const T* cols, int batch, const Window& win, T* img) {
  const int oh_n = win.out_h();
  const int ow_n = win.out_w();
  const std::size_t positions = static_cast<std::size_t>(oh_n) * ow_n;
  const std::size_t row_len = positions * batch;
  const std::size_t img_size = static_cast<std::size_t>(win.channels) * win.height * win.width;
  for (int c = 0; c < win.channels; ++c) {
    for (int ki = 0; ki < win.kernel; ++ki) {
      for (int kj = 0; kj < win.kernel; ++kj) {
        const T* row = cols + static_cast<std::size_t>((c * win.kernel + ki) * win.kernel + kj) * row_len;
        for (int n = 0; n < batch; ++n) {
          T* plane = img + n * img_size + static_cast<std::size_t>(c) * win.height * win.width;
          const T* src = row + n * positions;
          for (int oh = 0; oh < oh_n; ++oh) {
            const int ih = oh * win.stride - win.pad + ki;
            if (ih < 0 || ih >= win.height) {
              continue;
            }
            T* dst = plane + static_cast<std::size_t>(ih) * win.width;
            const T* in = src + static_cast<std::size_t>(oh) * ow_n;
            for (int ow = 0; ow < ow_n; ++ow) {
              const int iw = ow * win.stride - win.pad + kj;
              if (iw >= 0 && iw < win.width) {
                dst[iw] += in[ow];
              }
            }
          }
        }
      }
    }
  }
}

// NCHW -> (C, N*H*W) row-major.
template <typename T>
RowMat<T> channel_major(const Tensor<T>& x) {
  const Shape s = x.shape();
  const auto plane = static_cast<Eigen::Index>(s.plane());
  RowMat<T> m(s.c, static_cast<Eigen::Index>(s.n) * plane);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      std::copy_n(x.data() + x.index(n, c, 0, 0), plane, m.data() + c * m.cols() + n * plane);
    }
  }
  return m;
}

// (C, N*H*W) row-major -> NCHW.
template <typename T>
Tensor<T> from_channel_major(const T* m, Shape s) {
  Tensor<T> x(s);
  const auto plane = static_cast<std::size_t>(s.plane());
  const std::size_t cols = plane * s.n;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      std::copy_n(m + c * cols + n * plane, plane, x.data() + x.index(n, c, 0, 0));
    }
  }
  return x;
}

inline void require(bool ok, const std::string& what) {
  if (!ok) {
    throw InputError(what);
  }
}

}  // namespace detail

// 2-D convolution. weight: (Cout, Cin, k, k); bias: (1, Cout) or absent.
template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, std::optional<Var> bias, int stride, int pad) {
  using namespace detail;
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(weight).shape();
  require(ws.c == xs.c && ws.h == ws.w,
          "conv2d: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
  const Window win{xs.c, xs.h, xs.w, ws.h, stride, pad};
  require(win.out_h() > 0 && win.out_w() > 0, "conv2d: input " + to_string(xs) + " too small for kernel");
  const Shape ys{xs.n, ws.n, win.out_h(), win.out_w()};
  const Eigen::Index positions = static_cast<Eigen::Index>(ys.n) * ys.h * ys.w;

  RowMat<T> cols(win.rows(), positions);
  im2col(g.value(x).data(), xs.n, win, cols.data());
  ConstMatMap<T> w(g.value(weight).data(), ws.n, win.rows());
  RowMat<T> out = w * cols;
  if (bias) {
    const Tensor<T>& b = g.value(*bias);
    for (int co = 0; co < ws.n; ++co) {
      out.row(co).array() += b[static_cast<std::size_t>(co)];
    }
  }
  GroupMask deps = g.deps(x) | g.deps(weight) | (bias ? g.deps(*bias) : 0);
  return g.push(from_channel_major(out.data(), ys), deps,
                [x, weight, bias, win, xs, ws, cols = std::move(cols)](Graph<T>& g, Var, const Tensor<T>& dy) {
                  RowMat<T> dy_m = channel_major(dy);
                  if (g.needs(weight)) {
                    MatMap<T> dw(g.grad_accum(weight).data(), ws.n, win.rows());
                    dw.noalias() += dy_m * cols.transpose();
                  }
                  if (bias && g.needs(*bias)) {
                    Tensor<T>& db = g.grad_accum(*bias);
                    for (int co = 0; co < ws.n; ++co) {
                      db[static_cast<std::size_t>(co)] += dy_m.row(co).sum();
                    }
                  }
                  if (g.needs(x)) {
                    ConstMatMap<T> w(g.value(weight).data(), ws.n, win.rows());
                    RowMat<T> dcols = w.transpose() * dy_m;
                    col2im(dcols.data(), xs.n, win, g.grad_accum(x).data());
                  }
                });
}

// Transposed 2-D convolution (the adjoint of conv2d with the same geometry).
// weight: (Cin, Cout, k, k); output side = (in - 1) * stride - 2 * pad + k.
template <typename T>
Var conv_transpose2d(Graph<T>& g, Var x, Var weight, std::optional<Var> bias, int stride, int pad) {
  using namespace detail;
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(weight).shape();
  require(ws.n == xs.c && ws.h == ws.w,
          "conv_transpose2d: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
  const int k = ws.h;
  const Shape ys{xs.n, ws.c, (xs.h - 1) * stride - 2 * pad + k, (xs.w - 1) * stride - 2 * pad + k};
  require(ys.h > 0 && ys.w > 0, "conv_transpose2d: empty output");
  const Window win{ys.c, ys.h, ys.w, k, stride, pad};
  require(win.out_h() == xs.h && win.out_w() == xs.w, "conv_transpose2d: geometry is not invertible");

  RowMat<T> x_m = channel_major(g.value(x));
  ConstMatMap<T> w(g.value(weight).data(), ws.n, win.rows());
  RowMat<T> cols = w.transpose() * x_m;
  Tensor<T> y(ys);
  col2im(cols.data(), ys.n, win, y.data());
  if (bias) {
    const Tensor<T>& b = g.value(*bias);
    for (int n = 0; n < ys.n; ++n) {
      for (int c = 0; c < ys.c; ++c) {
        T* p = y.data() + y.index(n, c, 0, 0);
        std::for_each(p, p + ys.plane(), [bc = b[static_cast<std::size_t>(c)]](T& v) { v += bc; });
      }
    }
  }
  GroupMask deps = g.deps(x) | g.deps(weight) | (bias ? g.deps(*bias) : 0);
  return g.push(std::move(y), deps,
                [x, weight, bias, win, xs, ws, ys, x_m = std::move(x_m)](Graph<T>& g, Var, const Tensor<T>& dy) {
                  const Eigen::Index positions = static_cast<Eigen::Index>(xs.n) * xs.h * xs.w;
                  RowMat<T> dcols(win.rows(), positions);
                  im2col(dy.data(), ys.n, win, dcols.data());
                  if (g.needs(weight)) {
                    MatMap<T> dw(g.grad_accum(weight).data(), ws.n, win.rows());
                    dw.noalias() += x_m * dcols.transpose();
                  }
                  if (bias && g.needs(*bias)) {
                    Tensor<T>& db = g.grad_accum(*bias);
                    for (int n = 0; n < ys.n; ++n) {
                      for (int c = 0; c < ys.c; ++c) {
                        const T* p = dy.data() + dy.index(n, c, 0, 0);
                        T acc = 0;
                        for (std::size_t i = 0; i < ys.plane(); ++i) {
                          acc += p[i];
                        }
                        db[static_cast<std::size_t>(c)] += acc;
                      }
                    }
                  }
                  if (g.needs(x)) {
                    ConstMatMap<T> w(g.value(weight).data(), ws.n, win.rows());
                    RowMat<T> dx_m = w * dcols;
                    Tensor<T> dx = from_channel_major(dx_m.data(), xs);
                    Tensor<T>& acc = g.grad_accum(x);
                    for (std::size_t i = 0; i < acc.size(); ++i) {
                      acc[i] += dx[i];
                    }
                  }
                });
}

// Fully connected layer on (N, In, 1, 1) or any tensor flattened per sample.
// weight: (Out, In); bias: (1, Out).
template <typename T>
Var linear(Graph<T>& g, Var x, Var weight, Var bias) {
  using namespace detail;
  const Shape xs = g.value(x).shape();
  const Shape ws = g.value(weight).shape();
  const auto in = static_cast<Eigen::Index>(xs.sample_size());
  require(static_cast<Eigen::Index>(ws.c) * ws.h * ws.w == in,
          "linear: input " + to_string(xs) + " incompatible with weight " + to_string(ws));
  const Shape ys{xs.n, ws.n, 1, 1};
  ConstMatMap<T> xm(g.value(x).data(), xs.n, in);
  ConstMatMap<T> w(g.value(weight).data(), ws.n, in);
  Tensor<T> y(ys);
  MatMap<T> ym(y.data(), ys.n, ws.n);
  ym.noalias() = xm * w.transpose();
  const Tensor<T>& b = g.value(bias);
  for (int n = 0; n < ys.n; ++n) {
    for (int o = 0; o < ws.n; ++o) {
      ym(n, o) += b[static_cast<std::size_t>(o)];
    }
  }
  return g.push(std::move(y), g.deps(x) | g.deps(weight) | g.deps(bias),
                [x, weight, bias, xs, ws, in](Graph<T>& g, Var, const Tensor<T>& dy) {
                  ConstMatMap<T> dym(dy.data(), xs.n, ws.n);
                  if (g.needs(weight)) {
                    ConstMatMap<T> xm(g.value(x).data(), xs.n, in);
                    MatMap<T> dw(g.grad_accum(weight).data(), ws.n, in);
                    dw.noalias() += dym.transpose() * xm;
                  }
                  if (g.needs(bias)) {
                    Tensor<T>& db = g.grad_accum(bias);
                    for (int o = 0; o < ws.n; ++o) {
                      db[static_cast<std::size_t>(o)] += dym.col(o).sum();
                    }
                  }
                  if (g.needs(x)) {
                    ConstMatMap<T> w(g.value(weight).data(), ws.n, in);
                    MatMap<T> dx(g.grad_accum(x).data(), xs.n, in);
                    dx.noalias() += dym * w;
                  }
                });
}

// Per-channel batch normalization over (N, H, W). In training mode the batch
// statistics normalize the input and, when update targets are given, the
// running estimates are blended into them; in evaluation mode the running
// estimates are used.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, Var gamma, Var beta, const Tensor<T>& running_mean,
               const Tensor<T>& running_var, Tensor<T>* update_mean = nullptr, Tensor<T>* update_var = nullptr,
               T momentum = T(0.1), T eps = T(1e-5)) {
  const Tensor<T>& xv = g.value(x);
  const Shape s = xv.shape();
  detail::require(running_mean.size() == static_cast<std::size_t>(s.c),
                  "batch_norm: channel mismatch for input " + to_string(s));
  const std::size_t plane = s.plane();
  const std::size_t count = plane * s.n;
  std::vector<T> mean(s.c), inv_std(s.c);
  if (g.training()) {
    detail::require(count > 1, "batch_norm: training mode needs more than one value per channel");
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv.data() + xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          sum += p[i];
        }
      }
      const double mu = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const T* p = xv.data() + xv.index(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      if (update_mean != nullptr && update_var != nullptr) {
        (*update_mean)[c] = (T(1) - momentum) * running_mean[c] + momentum * static_cast<T>(mu);
        (*update_var)[c] =
            (T(1) - momentum) * running_var[c] +
            momentum * static_cast<T>(var * static_cast<double>(count) / static_cast<double>(count - 1));
      }
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      mean[c] = running_mean[c];
      inv_std[c] = T(1) / std::sqrt(running_var[c] + eps);
    }
  }

  const Tensor<T>& ga = g.value(gamma);
  const Tensor<T>& be = g.value(beta);
  Tensor<T> xhat(s);
  Tensor<T> y(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = xv.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const T h = (xv[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = h;
        y[base + i] = ga[static_cast<std::size_t>(c)] * h + be[static_cast<std::size_t>(c)];
      }
    }
  }
  const bool batch_stats = g.training();
  return g.push(std::move(y), g.deps(x) | g.deps(gamma) | g.deps(beta),
                [x, gamma, beta, s, plane, count, batch_stats, inv_std = std::move(inv_std),
                 xhat = std::move(xhat)](Graph<T>& g, Var, const Tensor<T>& dy) {
                  std::vector<T> sum_dy(s.c, T(0)), sum_dy_xhat(s.c, T(0));
                  for (int n = 0; n < s.n; ++n) {
                    for (int c = 0; c < s.c; ++c) {
                      const std::size_t base = dy.index(n, c, 0, 0);
                      for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy[c] += dy[base + i];
                        sum_dy_xhat[c] += dy[base + i] * xhat[base + i];
                      }
                    }
                  }
                  if (g.needs(gamma)) {
                    Tensor<T>& dg = g.grad_accum(gamma);
                    for (int c = 0; c < s.c; ++c) dg[static_cast<std::size_t>(c)] += sum_dy_xhat[c];
                  }
                  if (g.needs(beta)) {
                    Tensor<T>& db = g.grad_accum(beta);
                    for (int c = 0; c < s.c; ++c) db[static_cast<std::size_t>(c)] += sum_dy[c];
                  }
                  if (!g.needs(x)) {
                    return;
                  }
                  const Tensor<T>& ga = g.value(gamma);
                  Tensor<T>& dx = g.grad_accum(x);
                  const T m = static_cast<T>(count);
                  for (int n = 0; n < s.n; ++n) {
                    for (int c = 0; c < s.c; ++c) {
                      const std::size_t base = dy.index(n, c, 0, 0);
                      const T scale = ga[static_cast<std::size_t>(c)] * inv_std[c];
                      for (std::size_t i = 0; i < plane; ++i) {
                        if (batch_stats) {
                          dx[base + i] +=
                              scale * (dy[base + i] - sum_dy[c] / m - xhat[base + i] * sum_dy_xhat[c] / m);
                        } else {
                          dx[base + i] += scale * dy[base + i];
                        }
                      }
                    }
                  }
                });
}

namespace detail {

// Element-wise map whose derivative is a function of (input, output).
template <typename T, typename Fwd, typename Deriv>
Var pointwise(Graph<T>& g, Var x, Fwd fwd, Deriv deriv) {
  const Tensor<T>& xv = g.value(x);
  Tensor<T> y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = fwd(xv[i]);
  }
  return g.push(std::move(y), g.deps(x), [x, deriv](Graph<T>& g, Var self, const Tensor<T>& dy) {
    if (!g.needs(x)) {
      return;
    }
    const Tensor<T>& xv = g.value(x);
    const Tensor<T>& yv = g.value(self);
    Tensor<T>& dx = g.grad_accum(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += dy[i] * deriv(xv[i], yv[i]);
    }
  });
}

}  // namespace detail

template <typename T>
Var leaky_relu(Graph<T>& g, Var x, T slope) {
  return detail::pointwise(
      g, x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var relu(Graph<T>& g, Var x) {
  return detail::pointwise(
      g, x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var tanh(Graph<T>& g, Var x) {
  return detail::pointwise(
      g, x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var sigmoid(Graph<T>& g, Var x) {
  return detail::pointwise(
      g, x,
      [](T v) {
        if (v >= T(0)) {
          return T(1) / (T(1) + std::exp(-v));
        }
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

// Same data, new per-sample extents.
template <typename T>
Var reshape(Graph<T>& g, Var x, Shape s) {
  Tensor<T> y = g.value(x).reshaped(s);
  return g.push(std::move(y), g.deps(x), [x](Graph<T>& g, Var, const Tensor<T>& dy) {
    if (!g.needs(x)) {
      return;
    }
    Tensor<T>& dx = g.grad_accum(x);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      dx[i] += dy[i];
    }
  });
}

template <typename T>
Var flatten(Graph<T>& g, Var x) {
  const Shape s = g.value(x).shape();
  return reshape(g, x, Shape{s.n, static_cast<int>(s.sample_size()), 1, 1});
}

// Concatenate a spatial map (N, C, S, S) with a vector (N, D, 1, 1) tiled over
// every spatial position, giving (N, C + D, S, S).
template <typename T>
Var tile_concat(Graph<T>& g, Var map, Var vec) {
  const Tensor<T>& mv = g.value(map);
  const Tensor<T>& vv = g.value(vec);
  const Shape ms = mv.shape();
  const Shape vs = vv.shape();
  detail::require(vs.n == ms.n && vs.h == 1 && vs.w == 1,
                  "tile_concat: map " + to_string(ms) + " incompatible with vector " + to_string(vs));
  const Shape ys{ms.n, ms.c + vs.c, ms.h, ms.w};
  Tensor<T> y(ys);
  const std::size_t plane = ms.plane();
  for (int n = 0; n < ms.n; ++n) {
    std::copy_n(mv.sample(n), ms.sample_size(), y.sample(n));
    for (int d = 0; d < vs.c; ++d) {
      T* p = y.data() + y.index(n, ms.c + d, 0, 0);
      std::fill(p, p + plane, vv.at(n, d, 0, 0));
    }
  }
  return g.push(std::move(y), g.deps(map) | g.deps(vec),
                [map, vec, ms, vs, plane](Graph<T>& g, Var, const Tensor<T>& dy) {
                  if (g.needs(map)) {
                    Tensor<T>& dm = g.grad_accum(map);
                    for (int n = 0; n < ms.n; ++n) {
                      const T* src = dy.data() + dy.index(n, 0, 0, 0);
                      T* dst = dm.sample(n);
                      for (std::size_t i = 0; i < ms.sample_size(); ++i) dst[i] += src[i];
                    }
                  }
                  if (g.needs(vec)) {
                    Tensor<T>& dv = g.grad_accum(vec);
                    for (int n = 0; n < ms.n; ++n) {
                      for (int d = 0; d < vs.c; ++d) {
                        const T* p = dy.data() + dy.index(n, ms.c + d, 0, 0);
                        T acc = 0;
                        for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                        dv.at(n, d, 0, 0) += acc;
                      }
                    }
                  }
                });
}

// mean((a - b)^2) over every element: per-element mean per sample, then the
// batch mean (identical because samples have equal extents).
template <typename T>
Var mean_squared_error(Graph<T>& g, Var a, Var b) {
  const Tensor<T>& av = g.value(a);
  const Tensor<T>& bv = g.value(b);
  detail::require(av.shape() == bv.shape(),
                  "squared error: shape mismatch " + to_string(av.shape()) + " vs " + to_string(bv.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - static_cast<double>(bv[i]);
    acc += d * d;
  }
  const auto count = static_cast<double>(av.size());
  Tensor<T> y(Shape{1, 1, 1, 1}, static_cast<T>(acc / count));
  return g.push(std::move(y), g.deps(a) | g.deps(b), [a, b, count](Graph<T>& g, Var, const Tensor<T>& dy) {
    const Tensor<T>& av = g.value(a);
    const Tensor<T>& bv = g.value(b);
    const T k = static_cast<T>(2.0 / count) * dy[0];
    if (g.needs(a)) {
      Tensor<T>& da = g.grad_accum(a);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += k * (av[i] - bv[i]);
    }
    if (g.needs(b)) {
      Tensor<T>& db = g.grad_accum(b);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] -= k * (av[i] - bv[i]);
    }
  });
}

// Batch mean of log(clamp(q, eps, 1 - eps)) with q = p, or q = 1 - p when
// `complement` is set. The clamp has zero derivative outside [eps, 1 - eps].
template <typename T>
Var mean_log_prob(Graph<T>& g, Var p, bool complement, T eps) {
  const Tensor<T>& pv = g.value(p);
  detail::require(pv.size() > 0, "mean_log_prob: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const T q = complement ? T(1) - pv[i] : pv[i];
    acc += std::log(static_cast<double>(std::clamp(q, eps, T(1) - eps)));
  }
  const auto count = static_cast<double>(pv.size());
  Tensor<T> y(Shape{1, 1, 1, 1}, static_cast<T>(acc / count));
  return g.push(std::move(y), g.deps(p), [p, complement, eps, count](Graph<T>& g, Var, const Tensor<T>& dy) {
    if (!g.needs(p)) {
      return;
    }
    const Tensor<T>& pv = g.value(p);
    Tensor<T>& dp = g.grad_accum(p);
    for (std::size_t i = 0; i < dp.size(); ++i) {
      const T q = complement ? T(1) - pv[i] : pv[i];
      if (q < eps || q > T(1) - eps) {
        continue;
      }
      const T d = dy[0] / (q * static_cast<T>(count));
      dp[i] += complement ? -d : d;
    }
  });
}

// Weighted sum of same-shape nodes.
template <typename T>
Var weighted_sum(Graph<T>& g, std::initializer_list<std::pair<Var, T>> terms) {
  detail::require(terms.size() > 0, "weighted_sum: no terms");
  const Shape s = g.value(terms.begin()->first).shape();
  Tensor<T> y(s);
  GroupMask deps = 0;
  std::vector<std::pair<Var, T>> saved(terms);
  for (const auto& [v, w] : saved) {
    const Tensor<T>& tv = g.value(v);
    detail::require(tv.shape() == s, "weighted_sum: shape mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += w * tv[i];
    deps |= g.deps(v);
  }
  return g.push(std::move(y), deps, [saved = std::move(saved)](Graph<T>& g, Var, const Tensor<T>& dy) {
    for (const auto& [v, w] : saved) {
      if (!g.needs(v)) continue;
      Tensor<T>& dv = g.grad_accum(v);
      for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += w * dy[i];
    }
  });
}

}  // namespace cdgan::ops
