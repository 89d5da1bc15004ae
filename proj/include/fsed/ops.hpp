// Copyright 2026 The fsed Authors.
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

/**
 * @file ops.hpp
 * @brief Differentiable tensor operations used by the encoder, the
 * task-adaptive module and the metric heads.
 *
 * Layout conventions: feature maps are (batch, channel, freq, time) and
 * matrices are (rows, cols), all row-major.
 */
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fsed/autograd.hpp"
#include "fsed/error.hpp"
#include "fsed/tensor.hpp"

namespace fsed::ag {

namespace detail {

using RowMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got shape " +
                     shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

inline bool wants(const Node& self, std::size_t i) {
  return self.parents[i]->requires_grad;
}

inline Tensor& pgrad(Node& self, std::size_t i) {
  return self.parents[i]->grad_ref();
}

inline const Tensor& pval(const Node& self, std::size_t i) {
  return self.parents[i]->value;
}

template <typename F, typename D>
Var unary(const Var& x, F f, D df) {
  Tensor out(x.shape());
  const Tensor& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result(std::move(out), {x}, [df](Node& self) {
    const Tensor& xv = pval(self, 0);
    Tensor& gx = pgrad(self, 0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      gx[i] += self.grad[i] * df(xv[i], self.value[i]);
    }
  });
}

// x(c, oh + ki - pad, ow + kj - pad) laid out as a (C*k*k, Ho*Wo) matrix.
inline void im2col(const double* x, std::size_t channels, std::size_t height,
                   std::size_t width, std::size_t k, std::size_t pad,
                   std::size_t out_h, std::size_t out_w, double* col) {
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  const long p = static_cast<long>(pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* xc = x + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj, ++row) {
        double* dst = col + row * out_h * out_w;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = static_cast<long>(oh + ki) - p;
          double* d = dst + oh * out_w;
          if (ih < 0 || ih >= h) {
            std::fill(d, d + out_w, 0.0);
            continue;
          }
          const double* src = xc + ih * w;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = static_cast<long>(ow + kj) - p;
            d[ow] = (iw < 0 || iw >= w) ? 0.0 : src[iw];
          }
        }
      }
    }
  }
}

inline void col2im_add(const double* col, std::size_t channels,
                       std::size_t height, std::size_t width, std::size_t k,
                       std::size_t pad, std::size_t out_h, std::size_t out_w,
                       double* x) {
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  const long p = static_cast<long>(pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double* xc = x + c * height * width;
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj, ++row) {
        const double* src = col + row * out_h * out_w;
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          const long ih = static_cast<long>(oh + ki) - p;
          if (ih < 0 || ih >= h) continue;
          double* d = xc + ih * w;
          const double* s = src + oh * out_w;
          for (std::size_t ow = 0; ow < out_w; ++ow) {
            const long iw = static_cast<long>(ow + kj) - p;
            if (iw >= 0 && iw < w) d[iw] += s[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  out += b.value();
  return make_result(std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (detail::wants(self, p)) detail::pgrad(self, p) += self.grad;
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    if (detail::wants(self, 0)) detail::pgrad(self, 0) += self.grad;
    if (detail::wants(self, 1)) {
      Tensor& g = detail::pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result(std::move(out), {a, b}, [](Node& self) {
    const Tensor& av = detail::pval(self, 0);
    const Tensor& bv = detail::pval(self, 1);
    if (detail::wants(self, 0)) {
      Tensor& g = detail::pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (detail::wants(self, 1)) {
      Tensor& g = detail::pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

inline Var scale(const Var& x, double c) {
  return detail::unary(
      x, [c](double v) { return c * v; },
      [c](double, double) { return c; });
}

inline Var relu(const Var& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
}

inline Var sigmoid(const Var& x) {
  return detail::unary(
      x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline double softplus_value(double v) {
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline Var softplus(const Var& x) {
  return detail::unary(
      x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

inline Var exponential(const Var& x) {
  return detail::unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

/// Multiplies by a constant tensor of the same shape (no gradient to mask).
inline Var mask_mul(const Var& x, const Tensor& mask) {
  detail::require_same_shape(x.value(), mask, "mask_mul");
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result(std::move(out), {x}, [mask](Node& self) {
    Tensor& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

inline Var add_const(const Var& x, const Tensor& c) {
  detail::require_same_shape(x.value(), c, "add_const");
  Tensor out = x.value();
  out += c;
  return make_result(std::move(out), {x}, [](Node& self) {
    detail::pgrad(self, 0) += self.grad;
  });
}

inline Var sum_all(const Var& x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return make_result(Tensor({1}, s), {x}, [](Node& self) {
    Tensor& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Var reshape(const Var& x, Shape shape) {
  if (numel(shape) != x.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) +
                     " as " + shape_string(shape));
  }
  return make_result(x.value().reshaped(std::move(shape)), {x},
                     [](Node& self) {
                       Tensor& g = detail::pgrad(self, 0);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         g[i] += self.grad[i];
                       }
                     });
}

/// Rows [begin, end) along the leading dimension.
inline Var slice0(const Var& x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || begin > end || end > xv.dim(0)) {
    throw ShapeError("slice0: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of " +
                     shape_string(xv.shape()));
  }
  const std::size_t inner = xv.dim(0) ? xv.size() / xv.dim(0) : 0;
  Shape shape = xv.shape();
  shape[0] = end - begin;
  Tensor out(shape);
  std::copy(xv.data() + begin * inner, xv.data() + end * inner, out.data());
  return make_result(std::move(out), {x}, [begin, inner](Node& self) {
    Tensor& g = detail::pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[begin * inner + i] += self.grad[i];
    }
  });
}

/// Concatenation along the leading dimension.
inline Var concat0(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat0: no inputs");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const Var& p : parts) {
    Shape s = p.shape();
    if (s.size() != shape.size() ||
        !std::equal(s.begin() + 1, s.end(), shape.begin() + 1)) {
      throw ShapeError("concat0: trailing shape mismatch " +
                       shape_string(s) + " vs " + shape_string(shape));
    }
    rows += s[0];
  }
  shape[0] = rows;
  Tensor out(shape);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(),
              out.data() + offset);
    offset += p.value().size();
  }
  return make_result(std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      const std::size_t n = self.parents[p]->value.size();
      if (detail::wants(self, p)) {
        Tensor& g = detail::pgrad(self, p);
        for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
      }
      offset += n;
    }
  });
}

/// Mean over consecutive groups of `group` rows: (B, ...) -> (B/group, ...).
inline Var group_mean(const Var& x, std::size_t group) {
  const Tensor& xv = x.value();
  if (group == 0 || xv.rank() == 0 || xv.dim(0) % group != 0) {
    throw ShapeError("group_mean: leading dim of " +
                     shape_string(xv.shape()) + " not divisible by " +
                     std::to_string(group));
  }
  const std::size_t inner = xv.size() / xv.dim(0);
  Shape shape = xv.shape();
  shape[0] /= group;
  Tensor out(shape);
  const double inv = 1.0 / static_cast<double>(group);
  for (std::size_t r = 0; r < xv.dim(0); ++r) {
    const std::size_t o = r / group;
    for (std::size_t i = 0; i < inner; ++i) {
      out[o * inner + i] += xv[r * inner + i] * inv;
    }
  }
  return make_result(std::move(out), {x}, [group, inner, inv](Node& self) {
    Tensor& g = detail::pgrad(self, 0);
    const std::size_t rows = g.size() / inner;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r / group;
      for (std::size_t i = 0; i < inner; ++i) {
        g[r * inner + i] += self.grad[o * inner + i] * inv;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Convolutional building blocks

/// Stride-1 square-kernel 2-D convolution with symmetric zero padding.
/// x: (B, Ci, H, W), weight: (Co, Ci, k, k), bias: (Co) or none.
inline Var conv2d(const Var& x, const Var& weight,
                  const std::optional<Var>& bias, std::size_t pad) {
  using namespace detail;
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 4, "conv2d input");
  require_rank(wv, 4, "conv2d weight");
  const std::size_t batch = xv.dim(0), ci = xv.dim(1), h = xv.dim(2),
                    w = xv.dim(3);
  const std::size_t co = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != ci || wv.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_string(wv.shape()) +
                     " incompatible with input " + shape_string(xv.shape()));
  }
  if (h + 2 * pad < k || w + 2 * pad < k) {
    throw ShapeError("conv2d: input " + shape_string(xv.shape()) +
                     " smaller than kernel");
  }
  if (bias && bias->value().size() != co) {
    throw ShapeError("conv2d: bias size mismatch");
  }
  const std::size_t oh = h + 2 * pad - k + 1, ow = w + 2 * pad - k + 1;
  const std::size_t kk = ci * k * k, plane = oh * ow;
  Tensor out({batch, co, oh, ow});
  RowMat col(kk, plane);
  CMapMat wm(wv.data(), co, kk);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(xv.data() + b * ci * h * w, ci, h, w, k, pad, oh, ow, col.data());
    MapMat y(out.data() + b * co * plane, co, plane);
    y.noalias() = wm * col;
    if (bias) {
      for (std::size_t c = 0; c < co; ++c) y.row(c).array() += bias->value()[c];
    }
  }
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_result(
      std::move(out), parents,
      [=](Node& self) {
        const Tensor& xv = pval(self, 0);
        const Tensor& wv = pval(self, 1);
        CMapMat wm(wv.data(), co, kk);
        RowMat col(kk, plane);
        RowMat dcol(kk, plane);
        const bool want_x = wants(self, 0), want_w = wants(self, 1);
        const bool want_b = self.parents.size() > 2 && wants(self, 2);
        Tensor* gw = want_w ? &pgrad(self, 1) : nullptr;
        Tensor* gx = want_x ? &pgrad(self, 0) : nullptr;
        Tensor* gb = want_b ? &pgrad(self, 2) : nullptr;
        for (std::size_t b = 0; b < batch; ++b) {
          CMapMat dy(self.grad.data() + b * co * plane, co, plane);
          if (want_w) {
            im2col(xv.data() + b * ci * h * w, ci, h, w, k, pad, oh, ow,
                   col.data());
            MapMat(gw->data(), co, kk).noalias() += dy * col.transpose();
          }
          if (want_x) {
            dcol.noalias() = wm.transpose() * dy;
            col2im_add(dcol.data(), ci, h, w, k, pad, oh, ow,
                       gx->data() + b * ci * h * w);
          }
          if (want_b) {
            for (std::size_t c = 0; c < co; ++c) (*gb)[c] += dy.row(c).sum();
          }
        }
      });
}

/// Running statistics of one batch-norm layer.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean({channels}, 0.0), running_var({channels}, 1.0) {}
};

/// Per-channel batch normalization of (B, C, H, W). Training mode normalizes
/// with batch statistics and updates the running estimates; inference mode
/// uses the running estimates only.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta,
                      BatchNormState& state, bool training) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "batch_norm");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1),
                    plane = xv.dim(2) * xv.dim(3);
  if (gamma.value().size() != ch || beta.value().size() != ch ||
      state.running_mean.size() != ch) {
    throw ShapeError("batch_norm: channel count mismatch");
  }
  const double count = static_cast<double>(batch * plane);
  Tensor mean({ch}), inv_std({ch});
  for (std::size_t c = 0; c < ch; ++c) {
    if (training) {
      double s = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = count > 0 ? s / count : 0.0;
      double ss = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = xv.data() + (b * ch + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) ss += (p[i] - m) * (p[i] - m);
      }
      const double var = count > 0 ? ss / count : 0.0;
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      const double unbiased = count > 1 ? ss / (count - 1.0) : var;
      state.running_mean[c] =
          (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] +
                             state.momentum * unbiased;
    } else {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }
  Tensor xhat(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (b * ch + c) * plane;
      const double g = gamma.value()[c], be = beta.value()[c];
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (xv[base + i] - mean[c]) * inv_std[c];
        xhat[base + i] = xh;
        out[base + i] = g * xh + be;
      }
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat)](Node& self) {
        const Tensor& gam = pval(self, 1);
        Tensor dgamma({ch}), dbeta({ch});
        for (std::size_t c = 0; c < ch; ++c) {
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              dgamma[c] += self.grad[base + i] * xhat[base + i];
              dbeta[c] += self.grad[base + i];
            }
          }
        }
        if (wants(self, 1)) pgrad(self, 1) += dgamma;
        if (wants(self, 2)) pgrad(self, 2) += dbeta;
        if (!wants(self, 0)) return;
        Tensor& gx = pgrad(self, 0);
        for (std::size_t c = 0; c < ch; ++c) {
          const double g = gam[c];
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * ch + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              const double dxhat = self.grad[base + i] * g;
              if (training) {
                // dgamma/dbeta double as sum(dy*xhat) and sum(dy).
                gx[base + i] += inv_std[c] / count *
                                (count * dxhat - g * dbeta[c] -
                                 xhat[base + i] * g * dgamma[c]);
              } else {
                gx[base + i] += dxhat * inv_std[c];
              }
            }
          }
        }
      });
}

/// Non-overlapping p x p max pooling; spatial sizes use floor division.
inline Var max_pool2d(const Var& x, std::size_t p) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "max_pool2d");
  if (p == 0) throw ShapeError("max_pool2d: pool size must be positive");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2),
                    w = xv.dim(3);
  const std::size_t oh = h / p, ow = w / p;
  if (oh == 0 || ow == 0) {
    throw ShapeError("max_pool2d: input " + shape_string(xv.shape()) +
                     " smaller than pool " + std::to_string(p));
  }
  Tensor out({batch, ch, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  std::size_t o = 0;
  for (std::size_t bc = 0; bc < batch * ch; ++bc) {
    const std::size_t base = bc * h * w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + i * p * w + j * p;
        for (std::size_t di = 0; di < p; ++di) {
          for (std::size_t dj = 0; dj < p; ++dj) {
            const std::size_t idx = base + (i * p + di) * w + j * p + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        out[o] = xv[best];
        (*argmax)[o] = best;
      }
    }
  }
  return make_result(std::move(out), {x}, [argmax](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      g[(*argmax)[i]] += self.grad[i];
    }
  });
}

/// Global average over the spatial plane: (B, C, H, W) -> (B, C).
inline Var spatial_mean(const Var& x) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "spatial_mean");
  const std::size_t bc = xv.dim(0) * xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  Tensor out({xv.dim(0), xv.dim(1)});
  for (std::size_t i = 0; i < bc; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += xv[i * plane + j];
    out[i] = s / static_cast<double>(plane);
  }
  return make_result(std::move(out), {x}, [bc, plane](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double inv = 1.0 / static_cast<double>(plane);
    for (std::size_t i = 0; i < bc; ++i) {
      for (std::size_t j = 0; j < plane; ++j) {
        g[i * plane + j] += self.grad[i] * inv;
      }
    }
  });
}

/// Affine map of rows: x (B, in), weight (out, in), bias (out).
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
  using namespace detail;
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  require_rank(xv, 2, "linear input");
  require_rank(wv, 2, "linear weight");
  const std::size_t batch = xv.dim(0), in = xv.dim(1), outd = wv.dim(0);
  if (wv.dim(1) != in || bias.value().size() != outd) {
    throw ShapeError("linear: weight " + shape_string(wv.shape()) +
                     " incompatible with input " + shape_string(xv.shape()));
  }
  Tensor out({batch, outd});
  MapMat y(out.data(), batch, outd);
  y.noalias() = CMapMat(xv.data(), batch, in) *
                CMapMat(wv.data(), outd, in).transpose();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outd; ++o) y(b, o) += bias.value()[o];
  }
  return make_result(
      std::move(out), {x, weight, bias}, [=](Node& self) {
        CMapMat dy(self.grad.data(), batch, outd);
        if (wants(self, 0)) {
          MapMat(pgrad(self, 0).data(), batch, in).noalias() +=
              dy * CMapMat(pval(self, 1).data(), outd, in);
        }
        if (wants(self, 1)) {
          MapMat(pgrad(self, 1).data(), outd, in).noalias() +=
              dy.transpose() * CMapMat(pval(self, 0).data(), batch, in);
        }
        if (wants(self, 2)) {
          Tensor& gb = pgrad(self, 2);
          for (std::size_t o = 0; o < outd; ++o) gb[o] += dy.col(o).sum();
        }
      });
}

/// x (B, C, H, W) scaled by a per-(sample, channel) gate (B, C).
inline Var scale_channels(const Var& x, const Var& gate) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "scale_channels");
  const std::size_t bc = xv.dim(0) * xv.dim(1), plane = xv.dim(2) * xv.dim(3);
  if (gate.value().size() != bc) {
    throw ShapeError("scale_channels: gate shape mismatch");
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < bc; ++i) {
    for (std::size_t j = 0; j < plane; ++j) out[i * plane + j] *= gate.value()[i];
  }
  return make_result(std::move(out), {x, gate}, [bc, plane](Node& self) {
    const Tensor& xv = pval(self, 0);
    const Tensor& gv = pval(self, 1);
    if (wants(self, 0)) {
      Tensor& g = pgrad(self, 0);
      for (std::size_t i = 0; i < bc; ++i) {
        for (std::size_t j = 0; j < plane; ++j) {
          g[i * plane + j] += self.grad[i * plane + j] * gv[i];
        }
      }
    }
    if (wants(self, 1)) {
      Tensor& g = pgrad(self, 1);
      for (std::size_t i = 0; i < bc; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < plane; ++j) {
          s += self.grad[i * plane + j] * xv[i * plane + j];
        }
        g[i] += s;
      }
    }
  });
}

/// Mean over channels and frequency: (B, C, H, W) -> (B, W).
inline Var frame_mean(const Var& x) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "frame_mean");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1), h = xv.dim(2),
                    w = xv.dim(3);
  const double inv = 1.0 / static_cast<double>(ch * h);
  Tensor out({batch, w});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < ch; ++c) {
      for (std::size_t i = 0; i < h; ++i) {
        const double* row = xv.data() + ((b * ch + c) * h + i) * w;
        for (std::size_t t = 0; t < w; ++t) out[b * w + t] += row[t] * inv;
      }
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t i = 0; i < h; ++i) {
          double* row = g.data() + ((b * ch + c) * h + i) * w;
          for (std::size_t t = 0; t < w; ++t) row[t] += self.grad[b * w + t] * inv;
        }
      }
    }
  });
}

/// Single-channel 1-D convolution along rows of (B, L) with zero "same"
/// padding; kernel (k) with k odd, bias (1).
inline Var conv1d_same(const Var& x, const Var& kernel, const Var& bias) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 2, "conv1d_same");
  const std::size_t batch = xv.dim(0), len = xv.dim(1);
  const std::size_t k = kernel.value().size();
  if (k % 2 == 0 || bias.value().size() != 1) {
    throw ShapeError("conv1d_same: kernel must be odd-sized with one bias");
  }
  const long half = static_cast<long>(k / 2);
  Tensor out({batch, len});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) {
      double s = bias.value()[0];
      for (std::size_t j = 0; j < k; ++j) {
        const long src = static_cast<long>(t) + static_cast<long>(j) - half;
        if (src >= 0 && src < static_cast<long>(len)) {
          s += kernel.value()[j] * xv[b * len + static_cast<std::size_t>(src)];
        }
      }
      out[b * len + t] = s;
    }
  }
  return make_result(std::move(out), {x, kernel, bias}, [=](Node& self) {
    const Tensor& xv = pval(self, 0);
    const Tensor& kv = pval(self, 1);
    Tensor* gx = wants(self, 0) ? &pgrad(self, 0) : nullptr;
    Tensor* gk = wants(self, 1) ? &pgrad(self, 1) : nullptr;
    Tensor* gb = wants(self, 2) ? &pgrad(self, 2) : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t t = 0; t < len; ++t) {
        const double dy = self.grad[b * len + t];
        if (gb) (*gb)[0] += dy;
        for (std::size_t j = 0; j < k; ++j) {
          const long src = static_cast<long>(t) + static_cast<long>(j) - half;
          if (src < 0 || src >= static_cast<long>(len)) continue;
          const std::size_t s = b * len + static_cast<std::size_t>(src);
          if (gk) (*gk)[j] += dy * xv[s];
          if (gx) (*gx)[s] += dy * kv[j];
        }
      }
    }
  });
}

/// x (B, C, H, W) scaled by a per-(sample, frame) gate (B, W).
inline Var scale_frames(const Var& x, const Var& gate) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "scale_frames");
  const std::size_t batch = xv.dim(0), rows = xv.dim(1) * xv.dim(2),
                    w = xv.dim(3);
  if (gate.value().size() != batch * w) {
    throw ShapeError("scale_frames: gate shape mismatch");
  }
  Tensor out = xv;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = out.data() + (b * rows + r) * w;
      for (std::size_t t = 0; t < w; ++t) row[t] *= gate.value()[b * w + t];
    }
  }
  return make_result(std::move(out), {x, gate}, [=](Node& self) {
    const Tensor& xv = pval(self, 0);
    const Tensor& gv = pval(self, 1);
    Tensor* gx = wants(self, 0) ? &pgrad(self, 0) : nullptr;
    Tensor* gg = wants(self, 1) ? &pgrad(self, 1) : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t base = (b * rows + r) * w;
        for (std::size_t t = 0; t < w; ++t) {
          const double dy = self.grad[base + t];
          if (gx) (*gx)[base + t] += dy * gv[b * w + t];
          if (gg) (*gg)[b * w + t] += dy * xv[base + t];
        }
      }
    }
  });
}

/// Softmax across the channel axis of (B, C, H, W), independently at every
/// (sample, h, w) location.
inline Var channel_softmax(const Var& x) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 4, "channel_softmax");
  const std::size_t batch = xv.dim(0), ch = xv.dim(1),
                    plane = xv.dim(2) * xv.dim(3);
  Tensor out(xv.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t s = 0; s < plane; ++s) {
      const std::size_t base = b * ch * plane + s;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < ch; ++c) mx = std::max(mx, xv[base + c * plane]);
      double z = 0.0;
      for (std::size_t c = 0; c < ch; ++c) {
        const double e = std::exp(xv[base + c * plane] - mx);
        out[base + c * plane] = e;
        z += e;
      }
      for (std::size_t c = 0; c < ch; ++c) out[base + c * plane] /= z;
    }
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t s = 0; s < plane; ++s) {
        const std::size_t base = b * ch * plane + s;
        double dot = 0.0;
        for (std::size_t c = 0; c < ch; ++c) {
          dot += self.grad[base + c * plane] * self.value[base + c * plane];
        }
        for (std::size_t c = 0; c < ch; ++c) {
          const std::size_t i = base + c * plane;
          g[i] += self.value[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

/// x (B, ...) times p (1, ...) broadcast over the leading dimension.
inline Var mul_broadcast0(const Var& x, const Var& p) {
  using namespace detail;
  const Tensor& xv = x.value();
  const Tensor& pv = p.value();
  if (xv.rank() != pv.rank() || pv.rank() == 0 || pv.dim(0) != 1 ||
      !std::equal(xv.shape().begin() + 1, xv.shape().end(),
                  pv.shape().begin() + 1)) {
    throw ShapeError("mul_broadcast0: cannot broadcast " +
                     shape_string(pv.shape()) + " over " +
                     shape_string(xv.shape()));
  }
  const std::size_t inner = pv.size();
  const std::size_t batch = xv.dim(0);
  Tensor out = xv;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < inner; ++i) out[b * inner + i] *= pv[i];
  }
  return make_result(std::move(out), {x, p}, [=](Node& self) {
    const Tensor& xv = pval(self, 0);
    const Tensor& pv = pval(self, 1);
    Tensor* gx = wants(self, 0) ? &pgrad(self, 0) : nullptr;
    Tensor* gp = wants(self, 1) ? &pgrad(self, 1) : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < inner; ++i) {
        const double dy = self.grad[b * inner + i];
        if (gx) (*gx)[b * inner + i] += dy * pv[i];
        if (gp) (*gp)[i] += dy * xv[b * inner + i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Metric and graph operations

/// Squared Euclidean distances between rows: a (n, d), b (m, d) -> (n, m).
/// Differences are formed explicitly so identical rows give exactly zero.
inline Var pairwise_sqdist(const Var& a, const Var& b) {
  using namespace detail;
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank(av, 2, "pairwise_sqdist");
  require_rank(bv, 2, "pairwise_sqdist");
  if (av.dim(1) != bv.dim(1)) {
    throw ShapeError("pairwise_sqdist: feature dims differ " +
                     shape_string(av.shape()) + " vs " +
                     shape_string(bv.shape()));
  }
  const std::size_t n = av.dim(0), m = bv.dim(0), d = av.dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = av.data() + i * d;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = bv.data() + j * d;
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = ai[t] - bj[t];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  }
  return make_result(std::move(out), {a, b}, [=](Node& self) {
    const Tensor& av = pval(self, 0);
    const Tensor& bv = pval(self, 1);
    const bool want_a = wants(self, 0), want_b = wants(self, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double* ai = av.data() + i * d;
      for (std::size_t j = 0; j < m; ++j) {
        const double g = 2.0 * self.grad[i * m + j];
        if (g == 0.0) continue;
        const double* bj = bv.data() + j * d;
        if (want_a) {
          double* ga = pgrad(self, 0).data() + i * d;
          for (std::size_t t = 0; t < d; ++t) ga[t] += g * (ai[t] - bj[t]);
        }
        if (want_b) {
          double* gb = pgrad(self, 1).data() + j * d;
          for (std::size_t t = 0; t < d; ++t) gb[t] -= g * (ai[t] - bj[t]);
        }
      }
    }
  });
}

/// Row i of x (n, ...) divided by s[i]; s has n elements.
inline Var div_rows(const Var& x, const Var& s) {
  using namespace detail;
  const Tensor& xv = x.value();
  if (xv.rank() == 0 || s.value().size() != xv.dim(0)) {
    throw ShapeError("div_rows: divisor count mismatch");
  }
  const std::size_t n = xv.dim(0), inner = n ? xv.size() / n : 0;
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < inner; ++j) out[i * inner + j] /= s.value()[i];
  }
  return make_result(std::move(out), {x, s}, [=](Node& self) {
    const Tensor& xv = pval(self, 0);
    const Tensor& sv = pval(self, 1);
    Tensor* gx = wants(self, 0) ? &pgrad(self, 0) : nullptr;
    Tensor* gs = wants(self, 1) ? &pgrad(self, 1) : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < inner; ++j) {
        const double dy = self.grad[i * inner + j];
        if (gx) (*gx)[i * inner + j] += dy / sv[i];
        acc += dy * xv[i * inner + j];
      }
      if (gs) (*gs)[i] -= acc / (sv[i] * sv[i]);
    }
  });
}

/// Elementwise max(W, W^T) of a square matrix.
inline Var sym_max(const Var& w) {
  using namespace detail;
  const Tensor& wv = w.value();
  require_rank(wv, 2, "sym_max");
  const std::size_t n = wv.dim(0);
  if (wv.dim(1) != n) throw ShapeError("sym_max: matrix must be square");
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::max(wv[i * n + j], wv[j * n + i]);
    }
  }
  return make_result(std::move(out), {w}, [n](Node& self) {
    const Tensor& wv = pval(self, 0);
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src =
            wv[i * n + j] >= wv[j * n + i] ? i * n + j : j * n + i;
        g[src] += self.grad[i * n + j];
      }
    }
  });
}

/// D^{-1/2} W D^{-1/2} with D = diag(row sums of W). Rows must have positive
/// sums.
inline Var sym_normalize(const Var& w) {
  using namespace detail;
  const Tensor& wv = w.value();
  require_rank(wv, 2, "sym_normalize");
  const std::size_t n = wv.dim(0);
  if (wv.dim(1) != n) throw ShapeError("sym_normalize: matrix must be square");
  auto r = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < n; ++j) d += wv[i * n + j];
    if (!(d > 0.0)) {
      throw NumericError("sym_normalize: row " + std::to_string(i) +
                         " has non-positive degree");
    }
    (*r)[i] = 1.0 / std::sqrt(d);
  }
  Tensor out({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = wv[i * n + j] * (*r)[i] * (*r)[j];
    }
  }
  return make_result(std::move(out), {w}, [n, r](Node& self) {
    const Tensor& wv = pval(self, 0);
    Tensor& g = pgrad(self, 0);
    const auto& rv = *r;
    // dL/dd_a collects both the row-a and column-a uses of r_a.
    std::vector<double> dd(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double t = self.grad[i * n + j] * wv[i * n + j] * rv[i] * rv[j];
        dd[i] += t;
        dd[j] += t;
      }
    }
    for (std::size_t a = 0; a < n; ++a) dd[a] *= -0.5 * rv[a] * rv[a];
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        g[a * n + b] += self.grad[a * n + b] * rv[a] * rv[b] + dd[a];
      }
    }
  });
}

/// Closed-form label propagation F = (I - alpha S)^{-1} Y, solved by LU.
/// Y is a constant (n, c) seed matrix; alpha must lie in [0, 1).
inline Var label_propagation(const Var& s, const Tensor& y, double alpha) {
  using namespace detail;
  const Tensor& sv = s.value();
  require_rank(sv, 2, "label_propagation");
  require_rank(y, 2, "label_propagation seeds");
  const std::size_t n = sv.dim(0), c = y.dim(1);
  if (sv.dim(1) != n || y.dim(0) != n) {
    throw ShapeError("label_propagation: operator " + shape_string(sv.shape()) +
                     " incompatible with seeds " + shape_string(y.shape()));
  }
  if (!(alpha >= 0.0) || alpha >= 1.0) {
    throw NumericError(
        "label_propagation: I - alpha*S is singular for alpha >= 1 (the "
        "normalized operator has eigenvalue 1); use alpha in [0, 1)");
  }
  RowMat a = RowMat::Identity(n, n) - alpha * CMapMat(sv.data(), n, n);
  auto lu = std::make_shared<Eigen::PartialPivLU<RowMat>>(a);
  RowMat f = lu->solve(CMapMat(y.data(), n, c));
  if (!f.allFinite()) {
    throw NumericError("label_propagation: non-finite solution; use alpha < 1");
  }
  Tensor out({n, c});
  MapMat(out.data(), n, c) = f;
  return make_result(std::move(out), {s}, [=](Node& self) {
    // dL/dS = alpha * A^{-T} G F^T
    CMapMat g(self.grad.data(), n, c);
    CMapMat fv(self.value.data(), n, c);
    RowMat z = lu->transpose().solve(RowMat(g));
    MapMat(pgrad(self, 0).data(), n, n).noalias() += alpha * z * fv.transpose();
  });
}

/// Rows rescaled to sum to one.
inline Var row_normalize(const Var& x) {
  using namespace detail;
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row_normalize");
  const std::size_t n = xv.dim(0), m = xv.dim(1);
  auto sums = std::make_shared<std::vector<double>>(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) (*sums)[i] += xv[i * m + j];
    if (!(std::abs((*sums)[i]) > 0.0)) {
      throw NumericError("row_normalize: zero row sum");
    }
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= (*sums)[i];
  }
  return make_result(std::move(out), {x}, [=](Node& self) {
    Tensor& g = pgrad(self, 0);
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        dot += self.grad[i * m + j] * self.value[i * m + j];
      }
      for (std::size_t j = 0; j < m; ++j) {
        g[i * m + j] += (self.grad[i * m + j] - dot) / (*sums)[i];
      }
    }
  });
}

/// Mean over rows of -sum_c target[r, c] * log_softmax(logits)[r, c].
inline Var soft_cross_entropy(const Var& logits, const Tensor& targets) {
  using namespace detail;
  const Tensor& lv = logits.value();
  require_rank(lv, 2, "soft_cross_entropy");
  require_same_shape(lv, targets, "soft_cross_entropy");
  if (!lv.all_finite()) {
    throw NumericError("soft_cross_entropy: non-finite scores");
  }
  const std::size_t n = lv.dim(0), m = lv.dim(1);
  if (n == 0) throw ShapeError("soft_cross_entropy: no rows");
  auto probs = std::make_shared<Tensor>(lv.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = lv.data() + i * m;
    const double mx = *std::max_element(row, row + m);
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < m; ++j) {
      (*probs)[i * m + j] = std::exp(row[j] - log_z);
      loss -= targets[i * m + j] * (row[j] - log_z);
    }
  }
  loss /= static_cast<double>(n);
  return make_result(Tensor({1}, loss), {logits}, [=](Node& self) {
    Tensor& g = pgrad(self, 0);
    const double scale = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      double tsum = 0.0;
      for (std::size_t j = 0; j < m; ++j) tsum += targets[i * m + j];
      for (std::size_t j = 0; j < m; ++j) {
        g[i * m + j] +=
            scale * ((*probs)[i * m + j] * tsum - targets[i * m + j]);
      }
    }
  });
}

}  // namespace fsed::ag
