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

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace chase {

/// Dense multi-channel 2D map in channel-major (C, H, W) order.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, double fill = 0.0)
      : c(channels), h(height), w(width),
        data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }
  int plane() const noexcept { return h * w; }

  double& operator()(int ch, int y, int x) {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }
  double operator()(int ch, int y, int x) const {
    return data[(static_cast<std::size_t>(ch) * h + y) * w + x];
  }

  std::span<double> channel(int ch) {
    return {data.data() + static_cast<std::size_t>(ch) * plane(),
            static_cast<std::size_t>(plane())};
  }
  std::span<const double> channel(int ch) const {
    return {data.data() + static_cast<std::size_t>(ch) * plane(),
            static_cast<std::size_t>(plane())};
  }

  bool same_shape(const Tensor& o) const noexcept {
    return c == o.c && h == o.h && w == o.w;
  }

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);
};

/// Accumulates `src` into `dst`, adopting src's shape when dst is empty.
void accumulate(Tensor& dst, const Tensor& src, double scale = 1.0);

/// Per-pixel 3-class probability map; an alias kept for readability.
using ProbMap = Tensor;

inline constexpr int kNumClasses = 3;
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kLiver = 1;
inline constexpr std::uint8_t kLesion = 2;
inline constexpr std::uint8_t kIgnore = 255;

/// 2D label image (one axial slice of a LabelMask).
struct LabelImage {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;

  LabelImage() = default;
  LabelImage(int height, int width, std::uint8_t fill = kBackground)
      : h(height), w(width), data(static_cast<std::size_t>(height) * width, fill) {}

  std::uint8_t& operator()(int y, int x) { return data[static_cast<std::size_t>(y) * w + x]; }
  std::uint8_t operator()(int y, int x) const { return data[static_cast<std::size_t>(y) * w + x]; }
};

}  // namespace chase
