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

// Progressive holistically-nested network (PHNN): a five-stage conv body with
// a 1x1 score head per stage. Each stage's logits are added to the running
// accumulator of the previous stages before the softmax, and every stage is
// supervised.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "core/nn.hpp"
#include "core/synthdata.hpp"
#include "core/tensor.hpp"

namespace chase {

inline constexpr int kNumStages = 5;

struct BackboneConfig {
  std::array<int, kNumStages> channels{16, 32, 64, 64, 64};
  /// Max-pool factor applied after stages 1-4 (1 disables pooling).
  std::array<int, kNumStages - 1> pool{2, 2, 2, 2};
  int convs_per_stage = 2;
  int height = 32;
  int width = 32;

  static constexpr int num_classes = kNumClasses;
  static constexpr int input_channels = 1;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Per-stage head scores, running logits and probabilities, all at input
/// resolution. `probs[4]` is the network's segmentation output.
struct StageOutputs {
  std::array<Tensor, kNumStages> scores;
  std::array<Tensor, kNumStages> logits;
  std::array<ProbMap, kNumStages> probs;

  const ProbMap& final() const { return probs[kNumStages - 1]; }
};

/// dL/dprobs per stage; an empty tensor means zero.
struct StageGrads {
  std::array<Tensor, kNumStages> dprobs;
};

/// Conv + ReLU repeated `convs_per_stage` times.
struct ConvStage {
  std::vector<nn::Conv2d> convs;

  struct Cache {
    std::vector<nn::Conv2d::Cache> conv;
    std::vector<Tensor> act;
  };

  static ConvStage make(nn::ParamLayout& layout, int in, int out, int n);
  void init(std::span<double> theta, std::mt19937_64& rng) const;
  Tensor forward(std::span<const double> theta, const Tensor& x, Cache* cache) const;
  Tensor backward(std::span<const double> theta, const Cache& cache, Tensor dy,
                  std::span<double> grad, bool need_dx) const;
};

/// Stages 1-2 with their score heads. Phase-specific in the co-hetero network.
struct Stem {
  ConvStage stage1;
  ConvStage stage2;
  nn::Conv2d head1;
  nn::Conv2d head2;
  int pool1 = 2;
  std::size_t begin = 0;  // parameter range
  std::size_t end = 0;

  struct Pass {
    ConvStage::Cache c1, c2;
    nn::PoolCache pool;
    nn::Conv2d::Cache h1, h2;
    Tensor s1, s2;  // stage outputs; s2 is the feature map handed to the trunk
    Tensor score1, score2;
    Tensor acc1, acc2;
    ProbMap prob1, prob2;
  };

  /// Gradients arriving at a stem from downstream consumers.
  struct Grad {
    Tensor dprob1, dprob2;  // through this stem's own stage 1-2 predictions
    Tensor dacc2;           // through the trunk's running accumulator
    Tensor dfeat;           // through the stage-2 features
  };

  static Stem make(nn::ParamLayout& layout, const BackboneConfig& cfg);
  void init(std::span<double> theta, std::mt19937_64& rng) const;
  Pass forward(std::span<const double> theta, const Tensor& image) const;
  void backward(std::span<const double> theta, const Pass& pass, const Grad& g,
                std::span<double> grad) const;
};

/// Stages 3-5 with score heads, consuming `in_channels` stage-2 features.
struct Trunk {
  std::array<int, 3> pools{2, 2, 2};  // applied before stages 3, 4, 5
  std::array<ConvStage, 3> stages;
  std::array<nn::Conv2d, 3> heads;
  int in_channels = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  struct Pass {
    std::array<nn::PoolCache, 3> pool;
    std::array<ConvStage::Cache, 3> cache;
    std::array<int, 3> stage_c{};
    std::array<nn::Conv2d::Cache, 3> head;
    std::array<Tensor, 3> out;
  };

  static Trunk make(nn::ParamLayout& layout, const BackboneConfig& cfg, int in_channels);
  void init(std::span<double> theta, std::mt19937_64& rng) const;

  /// Fills stages 3-5 of `outs`, building on `acc2`.
  Pass forward(std::span<const double> theta, const Tensor& feat, const Tensor& acc2,
               StageOutputs& outs) const;
  /// Returns dL/dfeat; adds dL/dacc2 into `dacc2`.
  Tensor backward(std::span<const double> theta, const Pass& pass, const StageOutputs& outs,
                  const StageGrads& g, std::span<double> grad, Tensor& dacc2) const;
};

/// Single-phase PHNN, used for supervised pretraining and as the baseline.
class PhnnNet {
 public:
  struct Pass {
    Stem::Pass stem;
    Trunk::Pass trunk;
    StageOutputs out;
  };

  explicit PhnnNet(const BackboneConfig& cfg);

  const BackboneConfig& config() const noexcept { return cfg_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const Stem& stem() const noexcept { return stem_; }
  const Trunk& trunk() const noexcept { return trunk_; }

  void init(std::uint64_t seed);
  /// Zero every score head; all stage predictions become uniform.
  void zero_heads();

  StageOutputs forward(const Tensor& image) const;
  Pass forward_pass(const Tensor& image) const;
  void backward(const Pass& pass, const StageGrads& g, std::span<double> grad) const;

 private:
  BackboneConfig cfg_;
  Stem stem_;
  Trunk trunk_;
  std::vector<double> params_;
};

/// Per-class multipliers for the cross-entropy.
struct ClassWeights {
  std::array<double, kNumClasses> w{1.0, 1.0, 1.0};
};

/// Inverse class frequency over the labeled masks, normalised to mean 1.
ClassWeights prevalence_weights(std::span<const Study> labeled);

/// Weighted NLL averaged over non-IGNORE pixels. If `dprob` is non-null,
/// adds scale * dL/dp into it. All-IGNORE input gives 0.
double cross_entropy(const ProbMap& p, const LabelImage& y, const ClassWeights& weights,
                     Tensor* dprob = nullptr, double scale = 1.0);

/// Sum over stages of (m/5) * cross_entropy(stage m).
double staged_seg_loss(const StageOutputs& outs, const LabelImage& y, const ClassWeights& weights,
                       StageGrads* grads = nullptr, double scale = 1.0);

struct LabeledSlice {
  Tensor image;
  LabelImage mask;
};

/// Batch mean of staged_seg_loss; accumulates parameter gradients if `grad`
/// is non-empty.
double supervised_loss(const PhnnNet& net, std::span<const LabeledSlice> batch,
                       const ClassWeights& weights, std::span<double> grad = {});

/// Per-pixel argmax label.
LabelImage argmax_labels(const ProbMap& p);

}  // namespace chase
