// Copyright (c) 2026 The phnet Authors. All Rights Reserved.
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

#include "phnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "phnet/autograd.hpp"
#include "phnet/parallel.hpp"

namespace phnet {

namespace {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype " + dtype_name(a.dtype()) + " vs " +
                        dtype_name(b.dtype()));
  }
}

void require_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) {
    throw ContractError(std::string(op) + ": dtype " + dtype_name(a.dtype()) + " vs " +
                        dtype_name(b.dtype()));
  }
}

void finish(const Tensor& out, const char* op) {
  if (debug_checks()) check_finite(out, op);
}

/// grad(impl) += factor * g, if impl takes part in differentiation.
template <class T>
void accumulate(TensorImpl& impl, std::span<const T> g, T factor = T(1)) {
  if (!impl.requires_grad) return;
  auto dst = detail::grad_buffer<T>(impl);
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

template <class T>
void im2col(const T* x, std::int64_t channels, std::int64_t height, std::int64_t width,
            std::int64_t kh, std::int64_t kw, int stride, int pad, std::int64_t out_h,
            std::int64_t out_w, T* col) {
  const std::int64_t plane = out_h * out_w;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* xc = x + c * height * width;
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * plane;
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * stride - pad + i;
          T* row = dst + oh * out_w;
          if (ih < 0 || ih >= height) {
            std::fill(row, row + out_w, T(0));
            continue;
          }
          const T* src = xc + ih * width;
          for (std::int64_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = ow * stride - pad + j;
            row[ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, std::int64_t channels, std::int64_t height, std::int64_t width,
            std::int64_t kh, std::int64_t kw, int stride, int pad, std::int64_t out_h,
            std::int64_t out_w, T* dx) {
  const std::int64_t plane = out_h * out_w;
  for (std::int64_t c = 0; c < channels; ++c) {
    T* xc = dx + c * height * width;
    for (std::int64_t i = 0; i < kh; ++i) {
      for (std::int64_t j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * plane;
        for (std::int64_t oh = 0; oh < out_h; ++oh) {
          const std::int64_t ih = oh * stride - pad + i;
          if (ih < 0 || ih >= height) continue;
          T* row = xc + ih * width;
          const T* s = src + oh * out_w;
          for (std::int64_t ow = 0; ow < out_w; ++ow) {
            const std::int64_t iw = ow * stride - pad + j;
            if (iw >= 0 && iw < width) row[iw] += s[ow];
          }
        }
      }
    }
  }
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, out_h, out_w;
  int stride, pad;

  std::int64_t k() const { return cin * kh * kw; }
  std::int64_t p() const { return out_h * out_w; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  });
  if (detail::needs_grad({a, b})) {
    detail::attach(out, {a, b}, "add", [ai = a.impl_ptr(), bi = b.impl_ptr()](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto g = detail::grad_of<T>(o);
        accumulate<T>(*ai, g);
        accumulate<T>(*bi, g);
      });
    });
  }
  finish(out, "add");
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  });
  if (detail::needs_grad({a, b})) {
    detail::attach(out, {a, b}, "mul", [ai = a.impl_ptr(), bi = b.impl_ptr()](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto g = detail::grad_of<T>(o);
        auto x = detail::data_of<T>(*ai);
        auto y = detail::data_of<T>(*bi);
        if (ai->requires_grad) {
          auto ga = detail::grad_buffer<T>(*ai);
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
        }
        if (bi->requires_grad) {
          auto gb = detail::grad_buffer<T>(*bi);
          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
        }
      });
    });
  }
  finish(out, "mul");
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = Tensor::zeros(a.shape(), a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto o = out.data<T>();
    const T f = static_cast<T>(factor);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = f * x[i];
  });
  if (detail::needs_grad({a})) {
    detail::attach(out, {a}, "scale", [ai = a.impl_ptr(), factor](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        accumulate<T>(*ai, detail::grad_of<T>(o), static_cast<T>(factor));
      });
    });
  }
  finish(out, "scale");
  return out;
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({1, 1, 1, 1}, a.dtype());
  visit_dtype(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double s = 0.0;
    for (T v : a.data<T>()) s += v;
    out.data<T>()[0] = static_cast<T>(s);
  });
  if (detail::needs_grad({a})) {
    detail::attach(out, {a}, "sum", [ai = a.impl_ptr()](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        const T g = detail::grad_of<T>(o)[0];
        for (T& v : detail::grad_buffer<T>(*ai)) v += g;
      });
    });
  }
  finish(out, "sum");
  return out;
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(std::max<std::int64_t>(1, a.numel())));
}

namespace {
thread_local KinkMonitor* active_monitor = nullptr;
}  // namespace

KinkMonitor::KinkMonitor() : margin_(std::numeric_limits<double>::infinity()), previous_(active_monitor) {
  active_monitor = this;
}

KinkMonitor::~KinkMonitor() {
  active_monitor = previous_;
  if (previous_ != nullptr) previous_->observe(margin_);
}

void KinkMonitor::observe(double distance) { margin_ = std::min(margin_, distance); }

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto o = out.data<T>();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
    if (active_monitor != nullptr) {
      for (const T v : in) active_monitor->observe(std::abs(static_cast<double>(v)));
    }
  });
  if (detail::needs_grad({x})) {
    detail::attach(out, {x}, "relu", [xi = x.impl_ptr()](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto g = detail::grad_of<T>(o);
        auto in = detail::data_of<T>(*xi);
        auto gx = detail::grad_buffer<T>(*xi);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (in[i] > T(0)) gx[i] += g[i];
        }
      });
    });
  }
  finish(out, "relu");
  return out;
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding) {
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  require_dtype(input, weight, "conv2d");
  if (xs.c != ws.c) {
    throw DimensionError("conv2d: input " + xs.str() + " has " + std::to_string(xs.c) +
                         " channels but weight " + ws.str() + " expects " + std::to_string(ws.c));
  }
  if (stride <= 0 || padding < 0) throw GeometryError("conv2d: stride must be > 0 and padding >= 0");
  if (bias.defined()) {
    require_dtype(input, bias, "conv2d bias");
    if (bias.numel() != ws.n) {
      throw DimensionError("conv2d: bias " + bias.shape().str() + " for weight " + ws.str());
    }
  }
  const std::int64_t span_h = xs.h + 2 * padding - ws.h;
  const std::int64_t span_w = xs.w + 2 * padding - ws.w;
  if (span_h < 0 || span_w < 0 || xs.n == 0) {
    throw GeometryError("conv2d: kernel " + ws.str() + " does not fit input " + xs.str() +
                        " with padding " + std::to_string(padding));
  }
  const ConvGeometry g{xs.n,     xs.c,   xs.h, xs.w, ws.n, ws.h, ws.w, span_h / stride + 1,
                       span_w / stride + 1, stride, padding};
  if (g.out_h <= 0 || g.out_w <= 0 || g.cout == 0) throw GeometryError("conv2d: empty output");

  Tensor out = Tensor::zeros({g.n, g.cout, g.out_h, g.out_w}, input.dtype());
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* x = input.data<T>().data();
    const T* bptr = bias.defined() ? bias.data<T>().data() : nullptr;
    T* y = out.data<T>().data();
    ConstMatMap<T> wmat(weight.data<T>().data(), g.cout, g.k());
    parallel_for(g.n, [&](std::int64_t begin, std::int64_t end, int) {
      Storage<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.k() * g.p()));
      for (std::int64_t s = begin; s < end; ++s) {
        const T* xs_ptr = x + s * g.cin * g.h * g.w;
        const T* cptr = xs_ptr;
        if (!g.pointwise()) {
          im2col(xs_ptr, g.cin, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.out_h, g.out_w, col.data());
          cptr = col.data();
        }
        MatMap<T> ymat(y + s * g.cout * g.p(), g.cout, g.p());
        ymat.noalias() = wmat * ConstMatMap<T>(cptr, g.k(), g.p());
        if (bptr) {
          for (std::int64_t o = 0; o < g.cout; ++o) ymat.row(o).array() += bptr[o];
        }
      }
    });
  });

  if (detail::needs_grad({input, weight, bias})) {
    detail::attach(
        out, {input, weight, bias}, "conv2d",
        [xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.defined() ? bias.impl_ptr() : nullptr,
         g](const TensorImpl& o) {
          visit_dtype(o.dtype, [&](auto tag) {
            using T = decltype(tag);
            const T* gy = detail::grad_of<T>(o).data();
            const T* x = detail::data_of<T>(*xi).data();
            ConstMatMap<T> wmat(detail::data_of<T>(*wi).data(), g.cout, g.k());
            const bool want_x = xi->requires_grad;
            const bool want_w = wi->requires_grad;
            T* gx = want_x ? detail::grad_buffer<T>(*xi).data() : nullptr;

            std::vector<RowMat<T>> partial_w;
            const int workers = static_cast<int>(std::min<std::int64_t>(thread_count(), g.n));
            if (want_w) partial_w.assign(static_cast<std::size_t>(std::max(1, workers)), RowMat<T>::Zero(g.cout, g.k()));

            parallel_for(g.n, [&](std::int64_t begin, std::int64_t end, int worker) {
              Storage<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.k() * g.p()));
              RowMat<T> dcol;
              for (std::int64_t s = begin; s < end; ++s) {
                ConstMatMap<T> gmat(gy + s * g.cout * g.p(), g.cout, g.p());
                if (want_w) {
                  const T* xs_ptr = x + s * g.cin * g.h * g.w;
                  const T* cptr = xs_ptr;
                  if (!g.pointwise()) {
                    im2col(xs_ptr, g.cin, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.out_h, g.out_w,
                           col.data());
                    cptr = col.data();
                  }
                  partial_w[static_cast<std::size_t>(worker)].noalias() +=
                      gmat * ConstMatMap<T>(cptr, g.k(), g.p()).transpose();
                }
                if (want_x) {
                  T* gxs = gx + s * g.cin * g.h * g.w;
                  if (g.pointwise()) {
                    MatMap<T>(gxs, g.k(), g.p()).noalias() += wmat.transpose() * gmat;
                  } else {
                    dcol.noalias() = wmat.transpose() * gmat;
                    col2im(dcol.data(), g.cin, g.h, g.w, g.kh, g.kw, g.stride, g.pad, g.out_h,
                           g.out_w, gxs);
                  }
                }
              }
            });

            if (want_w) {
              MatMap<T> gw(detail::grad_buffer<T>(*wi).data(), g.cout, g.k());
              for (const auto& p : partial_w) gw += p;
            }
            if (bi && bi->requires_grad) {
              auto gb = detail::grad_buffer<T>(*bi);
              for (std::int64_t s = 0; s < g.n; ++s) {
                for (std::int64_t c = 0; c < g.cout; ++c) {
                  const T* row = gy + (s * g.cout + c) * g.p();
                  T acc = T(0);
                  for (std::int64_t p = 0; p < g.p(); ++p) acc += row[p];
                  gb[static_cast<std::size_t>(c)] += acc;
                }
              }
            }
          });
        });
  }
  finish(out, "conv2d");
  return out;
}

// ---------------------------------------------------------------------------
// Batch normalization

RunningStats RunningStats::init(std::int64_t channels, DType dtype) {
  return {Tensor::zeros({channels, 1, 1, 1}, dtype), Tensor::full({channels, 1, 1, 1}, 1.0, dtype)};
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  RunningStats& stats, Mode mode, double eps, double momentum) {
  const Shape& s = input.shape();
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gamma, &beta, &stats.mean, &stats.var}) {
    if (t->numel() != s.c) {
      throw DimensionError("batch_norm: per-channel tensor " + t->shape().str() + " for input " +
                           s.str());
    }
    require_dtype(input, *t, "batch_norm");
  }
  const std::int64_t count = s.n * s.plane();
  if (mode == Mode::train && count == 0) throw DimensionError("batch_norm: empty batch " + s.str());

  Tensor out = Tensor::zeros(s, input.dtype());
  // Per-channel scale applied to the normalized value and the normalized
  // input itself are kept for the backward rule.
  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto x = input.data<T>();
    auto y = out.data<T>();
    auto gm = gamma.data<T>();
    auto bt = beta.data<T>();
    auto rm = stats.mean.data<T>();
    auto rv = stats.var.data<T>();
    std::vector<T> xhat(x.size());
    std::vector<T> inv_std(static_cast<std::size_t>(s.c));
    for (std::int64_t c = 0; c < s.c; ++c) {
      double mu = 0.0;
      double var = 0.0;
      if (mode == Mode::train) {
        for (std::int64_t n = 0; n < s.n; ++n) {
          const T* p = x.data() + (n * s.c + c) * s.plane();
          for (std::int64_t i = 0; i < s.plane(); ++i) mu += p[i];
        }
        mu /= static_cast<double>(count);
        for (std::int64_t n = 0; n < s.n; ++n) {
          const T* p = x.data() + (n * s.c + c) * s.plane();
          for (std::int64_t i = 0; i < s.plane(); ++i) {
            const double d = p[i] - mu;
            var += d * d;
          }
        }
        var /= static_cast<double>(count);
        const double unbiased = count > 1 ? var * count / (count - 1) : var;
        rm[c] = static_cast<T>((1.0 - momentum) * rm[c] + momentum * mu);
        rv[c] = static_cast<T>((1.0 - momentum) * rv[c] + momentum * unbiased);
      } else {
        mu = rm[c];
        var = rv[c];
      }
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[c] = static_cast<T>(inv);
      for (std::int64_t n = 0; n < s.n; ++n) {
        const std::int64_t off = (n * s.c + c) * s.plane();
        for (std::int64_t i = 0; i < s.plane(); ++i) {
          const T xh = static_cast<T>((x[off + i] - mu) * inv);
          xhat[off + i] = xh;
          y[off + i] = gm[c] * xh + bt[c];
        }
      }
    }
    if (!detail::needs_grad({input, gamma, beta})) return;
    detail::attach(
        out, {input, gamma, beta}, "batch_norm",
        [xi = input.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr(), xhat = std::move(xhat),
         inv_std = std::move(inv_std), s, mode](const TensorImpl& o) {
          auto gy = detail::grad_of<T>(o);
          auto gm = detail::data_of<T>(*gi);
          const double m = static_cast<double>(s.n * s.plane());
          T* gx = xi->requires_grad ? detail::grad_buffer<T>(*xi).data() : nullptr;
          T* gg = gi->requires_grad ? detail::grad_buffer<T>(*gi).data() : nullptr;
          T* gb = bi->requires_grad ? detail::grad_buffer<T>(*bi).data() : nullptr;
          for (std::int64_t c = 0; c < s.c; ++c) {
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (std::int64_t n = 0; n < s.n; ++n) {
              const std::int64_t off = (n * s.c + c) * s.plane();
              for (std::int64_t i = 0; i < s.plane(); ++i) {
                sum_dy += gy[off + i];
                sum_dy_xhat += static_cast<double>(gy[off + i]) * xhat[off + i];
              }
            }
            if (gg) gg[c] += static_cast<T>(sum_dy_xhat);
            if (gb) gb[c] += static_cast<T>(sum_dy);
            if (!gx) continue;
            const double k = static_cast<double>(gm[c]) * inv_std[c];
            for (std::int64_t n = 0; n < s.n; ++n) {
              const std::int64_t off = (n * s.c + c) * s.plane();
              for (std::int64_t i = 0; i < s.plane(); ++i) {
                if (mode == Mode::train) {
                  gx[off + i] += static_cast<T>(
                      k / m * (m * gy[off + i] - sum_dy - xhat[off + i] * sum_dy_xhat));
                } else {
                  gx[off + i] += static_cast<T>(k * gy[off + i]);
                }
              }
            }
          }
        });
  };
  visit_dtype(input.dtype(), run);
  finish(out, "batch_norm");
  return out;
}

// ---------------------------------------------------------------------------
// Dense head, pooling

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  const Shape& xs = input.shape();
  const std::int64_t d = xs.c * xs.h * xs.w;
  const Shape& ws = weight.shape();
  require_dtype(input, weight, "linear");
  if (ws.c * ws.h * ws.w != d) {
    throw DimensionError("linear: input " + xs.str() + " vs weight " + ws.str());
  }
  if (bias.defined()) {
    require_dtype(input, bias, "linear bias");
    if (bias.numel() != ws.n) throw DimensionError("linear: bias " + bias.shape().str() + " vs weight " + ws.str());
  }
  const std::int64_t n = xs.n;
  const std::int64_t k = ws.n;
  Tensor out = Tensor::zeros({n, k, 1, 1}, input.dtype());
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    ConstMatMap<T> x(input.data<T>().data(), n, d);
    ConstMatMap<T> w(weight.data<T>().data(), k, d);
    MatMap<T> y(out.data<T>().data(), n, k);
    y.noalias() = x * w.transpose();
    if (bias.defined()) {
      auto b = bias.data<T>();
      for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < k; ++j) y(i, j) += b[j];
    }
  });
  if (detail::needs_grad({input, weight, bias})) {
    detail::attach(out, {input, weight, bias}, "linear",
                   [xi = input.impl_ptr(), wi = weight.impl_ptr(),
                    bi = bias.defined() ? bias.impl_ptr() : nullptr, n, k, d](const TensorImpl& o) {
                     visit_dtype(o.dtype, [&](auto tag) {
                       using T = decltype(tag);
                       ConstMatMap<T> gy(detail::grad_of<T>(o).data(), n, k);
                       if (xi->requires_grad) {
                         MatMap<T>(detail::grad_buffer<T>(*xi).data(), n, d).noalias() +=
                             gy * ConstMatMap<T>(detail::data_of<T>(*wi).data(), k, d);
                       }
                       if (wi->requires_grad) {
                         MatMap<T>(detail::grad_buffer<T>(*wi).data(), k, d).noalias() +=
                             gy.transpose() * ConstMatMap<T>(detail::data_of<T>(*xi).data(), n, d);
                       }
                       if (bi && bi->requires_grad) {
                         auto gb = detail::grad_buffer<T>(*bi);
                         for (std::int64_t i = 0; i < n; ++i)
                           for (std::int64_t j = 0; j < k; ++j) gb[j] += gy(i, j);
                       }
                     });
                   });
  }
  finish(out, "linear");
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape& s = input.shape();
  if (s.plane() == 0) throw GeometryError("global_avg_pool: empty spatial extent " + s.str());
  Tensor out = Tensor::zeros({s.n, s.c, 1, 1}, input.dtype());
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::int64_t i = 0; i < s.n * s.c; ++i) {
      double acc = 0.0;
      for (std::int64_t p = 0; p < s.plane(); ++p) acc += x[i * s.plane() + p];
      y[i] = static_cast<T>(acc / static_cast<double>(s.plane()));
    }
  });
  if (detail::needs_grad({input})) {
    detail::attach(out, {input}, "global_avg_pool", [xi = input.impl_ptr(), s](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto gy = detail::grad_of<T>(o);
        auto gx = detail::grad_buffer<T>(*xi);
        const T inv = T(1) / static_cast<T>(s.plane());
        for (std::int64_t i = 0; i < s.n * s.c; ++i)
          for (std::int64_t p = 0; p < s.plane(); ++p) gx[i * s.plane() + p] += gy[i] * inv;
      });
    });
  }
  finish(out, "global_avg_pool");
  return out;
}

Tensor max_pool2d(const Tensor& input, int kernel, int stride, int padding) {
  const Shape& s = input.shape();
  if (kernel <= 0 || stride <= 0 || padding < 0 || 2 * padding > kernel) {
    throw GeometryError("max_pool2d: invalid kernel/stride/padding");
  }
  const std::int64_t span_h = s.h + 2 * padding - kernel;
  const std::int64_t span_w = s.w + 2 * padding - kernel;
  if (span_h < 0 || span_w < 0) throw GeometryError("max_pool2d: window larger than input " + s.str());
  const std::int64_t oh = span_h / stride + 1;
  const std::int64_t ow = span_w / stride + 1;
  Tensor out = Tensor::zeros({s.n, s.c, oh, ow}, input.dtype());
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.numel()));
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::int64_t i = 0; i < s.n * s.c; ++i) {
      const std::int64_t base = i * s.plane();
      for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t q = 0; q < ow; ++q) {
          T best = -std::numeric_limits<T>::infinity();
          T second = -std::numeric_limits<T>::infinity();
          std::int64_t best_idx = -1;
          for (int a = 0; a < kernel; ++a) {
            const std::int64_t ih = r * stride - padding + a;
            if (ih < 0 || ih >= s.h) continue;
            for (int b = 0; b < kernel; ++b) {
              const std::int64_t iw = q * stride - padding + b;
              if (iw < 0 || iw >= s.w) continue;
              const std::int64_t idx = base + ih * s.w + iw;
              if (best_idx < 0 || x[idx] > best) {
                second = best;
                best = x[idx];
                best_idx = idx;
              } else if (x[idx] > second) {
                second = x[idx];
              }
            }
          }
          if (active_monitor != nullptr && best > T(0)) {
            active_monitor->observe(static_cast<double>(best) - static_cast<double>(second));
          }
          const std::int64_t o = (i * oh + r) * ow + q;
          y[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  });
  if (detail::needs_grad({input})) {
    detail::attach(out, {input}, "max_pool2d",
                   [xi = input.impl_ptr(), argmax = std::move(argmax)](const TensorImpl& o) {
                     visit_dtype(o.dtype, [&](auto tag) {
                       using T = decltype(tag);
                       auto gy = detail::grad_of<T>(o);
                       auto gx = detail::grad_buffer<T>(*xi);
                       for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
                     });
                   });
  }
  finish(out, "max_pool2d");
  return out;
}

// ---------------------------------------------------------------------------
// Softmax family

namespace {

/// Softmax over `len` contiguous values, max-subtracted.
template <class T>
void softmax_row(const T* in, T* out, std::int64_t len) {
  T mx = in[0];
  for (std::int64_t i = 1; i < len; ++i) mx = std::max(mx, in[i]);
  double z = 0.0;
  for (std::int64_t i = 0; i < len; ++i) z += std::exp(static_cast<double>(in[i] - mx));
  for (std::int64_t i = 0; i < len; ++i) out[i] = static_cast<T>(std::exp(static_cast<double>(in[i] - mx)) / z);
}

/// Row-wise softmax over rows of length `len` with its Jacobian-vector backward.
Tensor softmax_rows(const Tensor& x, std::int64_t rows, std::int64_t len, const char* name) {
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto in = x.data<T>();
    auto y = out.data<T>();
    for (std::int64_t r = 0; r < rows; ++r) softmax_row(in.data() + r * len, y.data() + r * len, len);
  });
  if (detail::needs_grad({x})) {
    Tensor probs = out.clone();
    detail::attach(out, {x}, name, [xi = x.impl_ptr(), probs, rows, len](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto gy = detail::grad_of<T>(o);
        auto p = probs.data<T>();
        auto gx = detail::grad_buffer<T>(*xi);
        for (std::int64_t r = 0; r < rows; ++r) {
          double dot = 0.0;
          for (std::int64_t i = 0; i < len; ++i) dot += static_cast<double>(gy[r * len + i]) * p[r * len + i];
          for (std::int64_t i = 0; i < len; ++i) {
            const std::int64_t k = r * len + i;
            gx[k] += static_cast<T>(p[k] * (gy[k] - dot));
          }
        }
      });
    });
  }
  return out;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.plane() != 1) throw DimensionError("softmax expects [N,K,1,1], got " + s.str());
  Tensor out = softmax_rows(logits, s.n, s.c, "softmax");
  finish(out, "softmax");
  return out;
}

Tensor spatial_softmax(const Tensor& logits) {
  const Shape& s = logits.shape();
  if (s.plane() == 0) throw GeometryError("spatial_softmax: empty map " + s.str());
  Tensor out = softmax_rows(logits, s.n * s.c, s.plane(), "spatial_softmax");
  finish(out, "spatial_softmax");
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  const Shape& s = logits.shape();
  if (s.plane() != 1) throw DimensionError("cross_entropy expects [N,K,1,1] logits, got " + s.str());
  if (static_cast<std::int64_t>(labels.size()) != s.n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + s.str());
  }
  for (int y : labels) {
    if (y < 0 || y >= s.c) {
      throw InputError("cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(s.c) + ")");
    }
  }
  Tensor out = Tensor::zeros({1, 1, 1, 1}, logits.dtype());
  Tensor probs = Tensor::zeros(s, logits.dtype());
  visit_dtype(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto z = logits.data<T>();
    auto p = probs.data<T>();
    double loss = 0.0;
    for (std::int64_t i = 0; i < s.n; ++i) {
      const T* row = z.data() + i * s.c;
      const T mx = *std::max_element(row, row + s.c);
      double lse = 0.0;
      for (std::int64_t k = 0; k < s.c; ++k) lse += std::exp(static_cast<double>(row[k] - mx));
      lse = std::log(lse) + mx;
      loss += lse - row[labels[i]];
      for (std::int64_t k = 0; k < s.c; ++k) p[i * s.c + k] = static_cast<T>(std::exp(row[k] - lse));
    }
    out.data<T>()[0] = static_cast<T>(loss / static_cast<double>(s.n));
  });
  if (detail::needs_grad({logits})) {
    std::vector<int> ys(labels.begin(), labels.end());
    detail::attach(out, {logits}, "cross_entropy",
                   [zi = logits.impl_ptr(), probs, ys = std::move(ys), s](const TensorImpl& o) {
                     visit_dtype(o.dtype, [&](auto tag) {
                       using T = decltype(tag);
                       const T g = detail::grad_of<T>(o)[0] / static_cast<T>(s.n);
                       auto p = probs.data<T>();
                       auto gz = detail::grad_buffer<T>(*zi);
                       for (std::int64_t i = 0; i < s.n; ++i) {
                         for (std::int64_t k = 0; k < s.c; ++k) {
                           const T onehot = (k == ys[i]) ? T(1) : T(0);
                           gz[i * s.c + k] += g * (p[i * s.c + k] - onehot);
                         }
                       }
                     });
                   });
  }
  finish(out, "cross_entropy");
  return out;
}

Tensor attention_pool(const Tensor& weights, const Tensor& values) {
  const Shape& ws = weights.shape();
  const Shape& vs = values.shape();
  require_dtype(weights, values, "attention_pool");
  if (ws.c != 1 || ws.n != vs.n || ws.h != vs.h || ws.w != vs.w) {
    throw DimensionError("attention_pool: weights " + ws.str() + " vs values " + vs.str());
  }
  const std::int64_t plane = vs.plane();
  Tensor out = Tensor::zeros({vs.n, vs.c, 1, 1}, values.dtype());
  visit_dtype(values.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto a = weights.data<T>();
    auto v = values.data<T>();
    auto y = out.data<T>();
    for (std::int64_t n = 0; n < vs.n; ++n) {
      for (std::int64_t c = 0; c < vs.c; ++c) {
        double acc = 0.0;
        for (std::int64_t p = 0; p < plane; ++p) acc += static_cast<double>(a[n * plane + p]) * v[(n * vs.c + c) * plane + p];
        y[n * vs.c + c] = static_cast<T>(acc);
      }
    }
  });
  if (detail::needs_grad({weights, values})) {
    detail::attach(out, {weights, values}, "attention_pool",
                   [ai = weights.impl_ptr(), vi = values.impl_ptr(), vs](const TensorImpl& o) {
                     visit_dtype(o.dtype, [&](auto tag) {
                       using T = decltype(tag);
                       const std::int64_t plane = vs.plane();
                       auto gy = detail::grad_of<T>(o);
                       auto a = detail::data_of<T>(*ai);
                       auto v = detail::data_of<T>(*vi);
                       T* ga = ai->requires_grad ? detail::grad_buffer<T>(*ai).data() : nullptr;
                       T* gv = vi->requires_grad ? detail::grad_buffer<T>(*vi).data() : nullptr;
                       for (std::int64_t n = 0; n < vs.n; ++n) {
                         for (std::int64_t c = 0; c < vs.c; ++c) {
                           const T g = gy[n * vs.c + c];
                           for (std::int64_t p = 0; p < plane; ++p) {
                             const std::int64_t vi_idx = (n * vs.c + c) * plane + p;
                             if (ga) ga[n * plane + p] += g * v[vi_idx];
                             if (gv) gv[vi_idx] += g * a[n * plane + p];
                           }
                         }
                       }
                     });
                   });
  }
  finish(out, "attention_pool");
  return out;
}

// ---------------------------------------------------------------------------
// Copies

Tensor slice_channels(const Tensor& input, std::int64_t begin, std::int64_t count) {
  const Shape& s = input.shape();
  if (begin < 0 || count < 0 || begin + count > s.c) {
    throw DimensionError("slice_channels: [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                         ") out of " + s.str());
  }
  Tensor out = Tensor::zeros({s.n, count, s.h, s.w}, input.dtype());
  visit_dtype(input.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = input.data<T>();
    auto y = out.data<T>();
    for (std::int64_t n = 0; n < s.n; ++n) {
      std::copy_n(x.data() + (n * s.c + begin) * s.plane(), count * s.plane(), y.data() + n * count * s.plane());
    }
  });
  if (detail::needs_grad({input})) {
    detail::attach(out, {input}, "slice_channels", [xi = input.impl_ptr(), s, begin, count](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto gy = detail::grad_of<T>(o);
        auto gx = detail::grad_buffer<T>(*xi);
        for (std::int64_t n = 0; n < s.n; ++n) {
          const T* src = gy.data() + n * count * s.plane();
          T* dst = gx.data() + (n * s.c + begin) * s.plane();
          for (std::int64_t i = 0; i < count * s.plane(); ++i) dst[i] += src[i];
        }
      });
    });
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_channels: no inputs");
  Shape s = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
      throw DimensionError("concat_channels: " + ps.str() + " vs " + s.str());
    }
    require_dtype(parts[0], p, "concat_channels");
    total += ps.c;
  }
  s.c = total;
  Tensor out = Tensor::zeros(s, parts[0].dtype());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  visit_dtype(out.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto y = out.data<T>();
    std::int64_t offset = 0;
    for (const auto& p : inputs) {
      auto x = p.data<T>();
      const std::int64_t c = p.shape().c;
      for (std::int64_t n = 0; n < s.n; ++n) {
        std::copy_n(x.data() + n * c * s.plane(), c * s.plane(), y.data() + (n * s.c + offset) * s.plane());
      }
      offset += c;
    }
  });
  bool any = false;
  for (const auto& p : inputs) any = any || detail::needs_grad({p});
  if (any) {
    std::vector<ImplPtr> impls;
    for (const auto& p : inputs) impls.push_back(p.impl_ptr());
    detail::attach(out, inputs, "concat_channels", [impls, s](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        auto gy = detail::grad_of<T>(o);
        std::int64_t offset = 0;
        for (const auto& impl : impls) {
          const std::int64_t c = impl->shape.c;
          if (impl->requires_grad) {
            auto gx = detail::grad_buffer<T>(*impl);
            for (std::int64_t n = 0; n < s.n; ++n) {
              const T* src = gy.data() + (n * s.c + offset) * s.plane();
              T* dst = gx.data() + n * c * s.plane();
              for (std::int64_t i = 0; i < c * s.plane(); ++i) dst[i] += src[i];
            }
          }
          offset += c;
        }
      });
    });
  }
  return out;
}

Tensor reshape(const Tensor& input, Shape shape) {
  if (shape.numel() != input.numel()) {
    throw DimensionError("reshape: " + input.shape().str() + " to " + shape.str());
  }
  Tensor out = input.clone();
  out.impl().shape = shape;
  if (detail::needs_grad({input})) {
    detail::attach(out, {input}, "reshape", [xi = input.impl_ptr()](const TensorImpl& o) {
      visit_dtype(o.dtype, [&](auto tag) {
        using T = decltype(tag);
        accumulate<T>(*xi, detail::grad_of<T>(o));
      });
    });
  }
  return out;
}

}  // namespace phnet
