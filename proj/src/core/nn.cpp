/*
 * chase-seg: semi-supervised multi-phase segmentation toolkit
 *
 * Copyright 2026 The chase-seg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace chase::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void im2col(const Tensor& x, int k, int dil, std::vector<double>& col) {
  const int pad = dil * (k / 2);
  const int hw = x.plane();
  col.assign(static_cast<std::size_t>(x.c) * k * k * hw, 0.0);
  std::size_t row = 0;
  for (int c = 0; c < x.c; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        double* dst = col.data() + row * hw;
        const int dy = ky * dil - pad;
        const int dx = kx * dil - pad;
        for (int y = 0; y < x.h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= x.h) continue;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(x.w, x.w - dx);
          const double* src = x.data.data() + (static_cast<std::size_t>(c) * x.h + sy) * x.w;
          for (int xx = x0; xx < x1; ++xx) dst[y * x.w + xx] = src[xx + dx];
        }
      }
    }
  }
}

void col2im(const std::vector<double>& dcol, int channels, int h, int w, int k, int dil,
            Tensor& dx) {
  const int pad = dil * (k / 2);
  const int hw = h * w;
  dx = Tensor(channels, h, w);
  std::size_t row = 0;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const double* src = dcol.data() + row * hw;
        const int dy = ky * dil - pad;
        const int ddx = kx * dil - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, -ddx);
          const int x1 = std::min(w, w - ddx);
          double* dst = dx.data.data() + (static_cast<std::size_t>(c) * h + sy) * w;
          for (int xx = x0; xx < x1; ++xx) dst[xx + ddx] += src[y * w + xx];
        }
      }
    }
  }
}

// Linear interpolation taps along one axis for a resize from n_in to n_out.
struct AxisTaps {
  std::vector<int> i0, i1;
  std::vector<double> w1;
};

AxisTaps make_taps(int n_in, int n_out) {
  AxisTaps t;
  t.i0.resize(n_out);
  t.i1.resize(n_out);
  t.w1.resize(n_out);
  const double scale = static_cast<double>(n_in) / n_out;
  for (int o = 0; o < n_out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(n_in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, n_in - 1);
    t.i0[o] = lo;
    t.i1[o] = hi;
    t.w1[o] = src - lo;
  }
  return t;
}

}  // namespace

Conv2d Conv2d::make(ParamLayout& layout, int in, int out, int kernel, int dilation) {
  CHASE_REQUIRE(in > 0 && out > 0 && kernel > 0 && kernel % 2 == 1 && dilation > 0,
                "invalid convolution geometry");
  Conv2d c;
  c.in = in;
  c.out = out;
  c.kernel = kernel;
  c.dilation = dilation;
  c.offset = layout.allocate(c.param_count());
  return c;
}

void Conv2d::init(std::span<double> theta, std::mt19937_64& rng) const {
  const double fan_in = static_cast<double>(in) * kernel * kernel;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (std::size_t i = 0; i < weight_count(); ++i) theta[offset + i] = dist(rng);
  for (int o = 0; o < out; ++o) theta[bias_offset() + o] = 0.0;
}

void Conv2d::zero(std::span<double> theta) const {
  std::fill_n(theta.begin() + static_cast<std::ptrdiff_t>(offset), param_count(), 0.0);
}

Tensor Conv2d::forward(std::span<const double> theta, const Tensor& x, Cache* cache) const {
  CHASE_REQUIRE(x.c == in, "conv input channel mismatch");
  const int hw = x.plane();
  const int kk = in * kernel * kernel;
  Tensor y(out, x.h, x.w);
  ConstMapMat wmat(theta.data() + offset, out, kk);
  MapMat ymat(y.data.data(), out, hw);

  std::vector<double> local;
  std::vector<double>& col = cache ? cache->col : local;
  if (kernel == 1) {
    col = x.data;
  } else {
    im2col(x, kernel, dilation, col);
  }
  ConstMapMat cmat(col.data(), kk, hw);
  ymat.noalias() = wmat * cmat;
  const double* b = theta.data() + bias_offset();
  for (int o = 0; o < out; ++o) ymat.row(o).array() += b[o];
  if (cache) {
    cache->h = x.h;
    cache->w = x.w;
  }
  return y;
}

Tensor Conv2d::backward(std::span<const double> theta, const Cache& cache, const Tensor& dy,
                        std::span<double> grad, bool need_dx) const {
  CHASE_REQUIRE(dy.c == out && dy.h == cache.h && dy.w == cache.w, "conv grad shape mismatch");
  const int hw = cache.h * cache.w;
  const int kk = in * kernel * kernel;
  ConstMapMat dmat(dy.data.data(), out, hw);
  ConstMapMat cmat(cache.col.data(), kk, hw);
  MapMat gw(grad.data() + offset, out, kk);
  gw.noalias() += dmat * cmat.transpose();
  double* gb = grad.data() + bias_offset();
  for (int o = 0; o < out; ++o) gb[o] += dmat.row(o).sum();

  if (!need_dx) return {};
  ConstMapMat wmat(theta.data() + offset, out, kk);
  if (kernel == 1) {
    Tensor dx(in, cache.h, cache.w);
    MapMat(dx.data.data(), in, hw).noalias() = wmat.transpose() * dmat;
    return dx;
  }
  std::vector<double> dcol(static_cast<std::size_t>(kk) * hw);
  MapMat(dcol.data(), kk, hw).noalias() = wmat.transpose() * dmat;
  Tensor dx;
  col2im(dcol, in, cache.h, cache.w, kernel, dilation, dx);
  return dx;
}

void leaky_relu(Tensor& x, double slope) {
  for (double& v : x.data) {
    if (v < 0) v *= slope;
  }
}

void leaky_relu_backward(const Tensor& y, Tensor& dy, double slope) {
  for (std::size_t i = 0; i < dy.data.size(); ++i) {
    if (!(y.data[i] > 0)) dy.data[i] *= slope;
  }
}

Tensor max_pool(const Tensor& x, int factor, PoolCache* cache) {
  CHASE_REQUIRE(factor >= 1, "pool factor must be positive");
  CHASE_REQUIRE(x.h % factor == 0 && x.w % factor == 0, "pool factor must divide the map size");
  const int oh = x.h / factor;
  const int ow = x.w / factor;
  Tensor y(x.c, oh, ow);
  if (cache) {
    cache->in_h = x.h;
    cache->in_w = x.w;
    cache->argmax.assign(y.size(), 0);
  }
  std::size_t o = 0;
  for (int c = 0; c < x.c; ++c) {
    for (int yy = 0; yy < oh; ++yy) {
      for (int xx = 0; xx < ow; ++xx, ++o) {
        int best = -1;
        double bv = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            const int idx = (yy * factor + dy) * x.w + xx * factor + dx;
            const double v = x.data[static_cast<std::size_t>(c) * x.plane() + idx];
            if (best < 0 || v > bv) {
              best = idx;
              bv = v;
            }
          }
        }
        y.data[o] = bv;
        if (cache) cache->argmax[o] = best;
      }
    }
  }
  return y;
}

Tensor max_pool_backward(const Tensor& dy, const PoolCache& cache, int channels) {
  Tensor dx(channels, cache.in_h, cache.in_w);
  const int plane_out = dy.plane();
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < plane_out; ++i) {
      const std::size_t o = static_cast<std::size_t>(c) * plane_out + i;
      dx.data[static_cast<std::size_t>(c) * dx.plane() + cache.argmax[o]] += dy.data[o];
    }
  }
  return dx;
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  if (x.h == out_h && x.w == out_w) return x;
  const AxisTaps ty = make_taps(x.h, out_h);
  const AxisTaps tx = make_taps(x.w, out_w);
  Tensor y(x.c, out_h, out_w);
  for (int c = 0; c < x.c; ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const double wy = ty.w1[oy];
      for (int ox = 0; ox < out_w; ++ox) {
        const double wx = tx.w1[ox];
        const double v00 = x(c, ty.i0[oy], tx.i0[ox]);
        const double v01 = x(c, ty.i0[oy], tx.i1[ox]);
        const double v10 = x(c, ty.i1[oy], tx.i0[ox]);
        const double v11 = x(c, ty.i1[oy], tx.i1[ox]);
        y(c, oy, ox) = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return y;
}

Tensor upsample_bilinear_backward(const Tensor& dy, int in_h, int in_w) {
  if (dy.h == in_h && dy.w == in_w) return dy;
  const AxisTaps ty = make_taps(in_h, dy.h);
  const AxisTaps tx = make_taps(in_w, dy.w);
  Tensor dx(dy.c, in_h, in_w);
  for (int c = 0; c < dy.c; ++c) {
    for (int oy = 0; oy < dy.h; ++oy) {
      const double wy = ty.w1[oy];
      for (int ox = 0; ox < dy.w; ++ox) {
        const double wx = tx.w1[ox];
        const double g = dy(c, oy, ox);
        dx(c, ty.i0[oy], tx.i0[ox]) += (1 - wy) * (1 - wx) * g;
        dx(c, ty.i0[oy], tx.i1[ox]) += (1 - wy) * wx * g;
        dx(c, ty.i1[oy], tx.i0[ox]) += wy * (1 - wx) * g;
        dx(c, ty.i1[oy], tx.i1[ox]) += wy * wx * g;
      }
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.c, logits.h, logits.w);
  const int n = logits.plane();
  for (int i = 0; i < n; ++i) {
    double mx = logits.data[i];
    for (int c = 1; c < logits.c; ++c) mx = std::max(mx, logits.data[static_cast<std::size_t>(c) * n + i]);
    double z = 0.0;
    for (int c = 0; c < logits.c; ++c) {
      const double e = std::exp(logits.data[static_cast<std::size_t>(c) * n + i] - mx);
      p.data[static_cast<std::size_t>(c) * n + i] = e;
      z += e;
    }
    for (int c = 0; c < logits.c; ++c) p.data[static_cast<std::size_t>(c) * n + i] /= z;
  }
  return p;
}

Tensor softmax_backward(const Tensor& p, const Tensor& dp) {
  CHASE_REQUIRE(p.same_shape(dp), "softmax grad shape mismatch");
  Tensor dz(p.c, p.h, p.w);
  const int n = p.plane();
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < p.c; ++c) {
      const std::size_t k = static_cast<std::size_t>(c) * n + i;
      dot += p.data[k] * dp.data[k];
    }
    for (int c = 0; c < p.c; ++c) {
      const std::size_t k = static_cast<std::size_t>(c) * n + i;
      dz.data[k] = p.data[k] * (dp.data[k] - dot);
    }
  }
  return dz;
}

}  // namespace chase::nn
