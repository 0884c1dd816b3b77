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

// Minimal layer primitives with explicit forward/backward passes.
//
// Layers do not own parameters. Each network keeps a single flat parameter
// buffer and layers record their offset into it, so optimisers, hashing and
// checkpoints all work on one contiguous vector.

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "core/tensor.hpp"

namespace chase::nn {

struct ParamLayout {
  std::size_t size = 0;
  std::size_t allocate(std::size_t n) {
    std::size_t off = size;
    size += n;
    return off;
  }
};

/// 2D convolution with "same" zero padding, stride 1.
struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 1;
  int dilation = 1;
  std::size_t offset = 0;

  struct Cache {
    int h = 0;
    int w = 0;
    std::vector<double> col;  // (in*k*k) x (h*w), row-major
  };

  static Conv2d make(ParamLayout& layout, int in, int out, int kernel, int dilation = 1);

  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out) * in * kernel * kernel;
  }
  std::size_t param_count() const noexcept { return weight_count() + out; }
  std::size_t bias_offset() const noexcept { return offset + weight_count(); }

  /// He-normal weights, zero bias.
  void init(std::span<double> theta, std::mt19937_64& rng) const;
  void zero(std::span<double> theta) const;

  Tensor forward(std::span<const double> theta, const Tensor& x, Cache* cache) const;

  /// Accumulates parameter gradients into `grad`; returns dL/dx when requested.
  Tensor backward(std::span<const double> theta, const Cache& cache, const Tensor& dy,
                  std::span<double> grad, bool need_dx = true) const;
};

/// In-place leaky rectifier; slope 0 gives a plain ReLU.
void leaky_relu(Tensor& x, double slope);
/// Masks `dy` using the sign of the forward output.
void leaky_relu_backward(const Tensor& y, Tensor& dy, double slope);

struct PoolCache {
  int in_h = 0;
  int in_w = 0;
  std::vector<int> argmax;
};

/// Non-overlapping max pooling with window = stride = factor.
Tensor max_pool(const Tensor& x, int factor, PoolCache* cache);
Tensor max_pool_backward(const Tensor& dy, const PoolCache& cache, int channels);

/// Bilinear resize (half-pixel centres, edge clamped).
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);
Tensor upsample_bilinear_backward(const Tensor& dy, int in_h, int in_w);

/// Softmax across channels at every pixel.
Tensor softmax(const Tensor& logits);
/// dL/dz given p = softmax(z) and dL/dp.
Tensor softmax_backward(const Tensor& p, const Tensor& dp);

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace chase::nn
