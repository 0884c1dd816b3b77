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
// Shared fixtures for the unit tests: tiny networks, random inputs, a
// central-difference gradient checker and parameter hashing.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "core/ada.hpp"
#include "core/backbone.hpp"
#include "core/heterofusion.hpp"

namespace chase::test {

/// 8x8 input, two channels per stage, one conv per stage.
inline BackboneConfig tiny_backbone() {
  BackboneConfig c;
  c.channels = {2, 2, 2, 2, 2};
  c.pool = {2, 2, 2, 1};
  c.convs_per_stage = 1;
  c.height = 8;
  c.width = 8;
  return c;
}

inline DiscriminatorConfig tiny_disc() {
  DiscriminatorConfig d;
  d.width = 3;
  return d;
}

inline Tensor random_image(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(1, h, w);
  for (double& v : t.data) v = u(rng);
  return t;
}

inline LabelImage random_labels(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, kNumClasses - 1);
  LabelImage y(h, w);
  for (auto& v : y.data) v = static_cast<std::uint8_t>(u(rng));
  return y;
}

/// Random point on the 3-class simplex at every pixel.
inline ProbMap random_probs(int h, int w, std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  ProbMap p(kNumClasses, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int c = 0; c < kNumClasses; ++c) s += (p(c, y, x) = g(rng) + 1e-3);
      for (int c = 0; c < kNumClasses; ++c) p(c, y, x) /= s;
    }
  }
  return p;
}

/// Perturbs every parameter with small noise so no weight block is exactly
/// zero and score heads are non-trivial.
inline void jitter(std::vector<double>& params, std::uint64_t seed, double scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (double& p : params) p += n(rng);
}

struct GradCheck {
  double max_rel = 0.0;
  std::size_t worst = 0;
  std::size_t checked = 0;
};

/// Compares `analytic` with central differences of `loss` over every
/// parameter. Relative error is |a - n| / max(|a| + |n|, floor).
inline GradCheck check_gradient(std::vector<double>& params, std::span<const double> analytic,
                                const std::function<double()>& loss, double h = 1e-5,
                                double floor = 1e-6) {
  GradCheck r;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss();
    params[i] = keep - h;
    const double down = loss();
    params[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double rel =
        std::abs(analytic[i] - numeric) / std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
    if (rel > r.max_rel) {
      r.max_rel = rel;
      r.worst = i;
    }
    ++r.checked;
  }
  return r;
}

/// FNV-1a over the raw parameter bytes.
inline std::uint64_t param_hash(std::span<const double> params) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(params.data());
  for (std::size_t i = 0; i < params.size_bytes(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline PhaseImages random_phase_images(std::span<const PhaseId> phases, int h, int w,
                                       std::mt19937_64& rng) {
  PhaseImages imgs;
  for (PhaseId p : phases) imgs[static_cast<std::size_t>(index_of(p))] = random_image(h, w, rng);
  return imgs;
}

}  // namespace chase::test
