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

// Output-space adversarial adaptation on the liver region (liver + lesion).
// The discriminator is a single ASPP block: parallel 3x3 convolutions with
// dilations {1,2,3,4} summed, a leaky ReLU (slope 0.2), a 1x1 convolution to
// one channel and a per-pixel logistic output.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "core/nn.hpp"
#include "core/synthdata.hpp"
#include "core/tensor.hpp"

namespace chase {

struct DiscriminatorConfig {
  int width = 32;
  std::array<int, 4> dilations{1, 2, 3, 4};
  double negative_slope = 0.2;
  bool operator==(const DiscriminatorConfig&) const = default;
};

class Discriminator {
 public:
  struct Pass {
    std::array<nn::Conv2d::Cache, 4> branch;
    Tensor hidden;
    nn::Conv2d::Cache head;
    Tensor prob;  // (1, H, W), in (0, 1)
  };

  explicit Discriminator(const DiscriminatorConfig& cfg = {});

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const nn::Conv2d& head() const noexcept { return head_; }

  void init(std::uint64_t seed);

  /// One batched evaluation; counted once per call for the given domain.
  std::vector<Pass> forward(std::span<const Tensor> regions, Domain domain) const;
  /// dL/dinput; parameter gradients are added into `grad` when it is non-empty.
  Tensor backward(const Pass& pass, const Tensor& dlogit, std::span<double> grad,
                  bool need_dx) const;

  long source_calls() const noexcept { return source_calls_; }
  long target_calls() const noexcept { return target_calls_; }
  void reset_counters() noexcept { source_calls_ = target_calls_ = 0; }

 private:
  Pass forward_one(const Tensor& region) const;

  DiscriminatorConfig cfg_;
  std::array<nn::Conv2d, 4> branches_;
  nn::Conv2d head_;
  std::vector<double> params_;
  mutable long source_calls_ = 0;
  mutable long target_calls_ = 0;
};

/// P(liver) + P(lesion) per pixel.
Tensor liver_region_map(const ProbMap& pred);
/// Adds the region-map gradient into dL/dpred.
void liver_region_backward(const Tensor& dregion, Tensor& dpred, double scale = 1.0);

/// Pixel-mean binary cross-entropy of the discriminator output against a
/// constant label. Outputs are clamped to [eps, 1-eps] for the value;
/// `dlogit` receives scale * dL/dlogit.
double bce_map(const Tensor& prob, double label, Tensor* dlogit = nullptr, double scale = 1.0);

struct DiscriminatorLossResult {
  double loss = 0.0;
  double source_term = 0.0;
  double target_term = 0.0;
};

/// Source predictions labelled 1, target consensus labelled 0, each side
/// averaged over its batch and pixels. Only discriminator parameters receive
/// gradients.
DiscriminatorLossResult discriminator_loss(const Discriminator& d,
                                           std::span<const Discriminator::Pass> source,
                                           std::span<const Discriminator::Pass> target,
                                           std::span<double> dgrad = {});

/// Target consensus labelled 1 (flipped). Fills dL/dregion per item when
/// requested; discriminator parameters are left untouched.
double adversarial_loss(const Discriminator& d, std::span<const Discriminator::Pass> target,
                        std::vector<Tensor>* dregions = nullptr);

}  // namespace chase
