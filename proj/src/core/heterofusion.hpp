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

// Hetero-phase network: one stem per contrast phase, features fused by their
// per-position mean and (population) variance at the stage-2/3 boundary, and a
// shared trunk. Any non-empty subset of phases is a valid input "view".

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core/backbone.hpp"
#include "core/synthdata.hpp"

namespace chase {

/// Non-empty, duplicate-free phase set kept in NC < A < V < D order.
struct ViewCombo {
  std::vector<PhaseId> phases;

  static ViewCombo of(std::vector<PhaseId> phases);
  static ViewCombo from_bits(unsigned bits);
  static ViewCombo parse(std::string_view text);  // "NC+A+V"

  /// Bit mask with NC=8, A=4, V=2, D=1.
  unsigned bits() const noexcept;
  bool contains(PhaseId p) const noexcept;
  std::size_t size() const noexcept { return phases.size(); }
  std::string name() const;

  bool operator==(const ViewCombo&) const = default;
};

/// All non-empty subsets of `available`, ordered by ascending bit mask
/// (D, V, V+D, A, ... , NC+A+V+D for a full study).
std::vector<ViewCombo> enumerate_views(std::span<const PhaseId> available);

/// concat(mean, variance) across the phase activations.
Tensor fuse_features(std::span<const Tensor* const> activations);
/// Gradient of fuse_features with respect to each input activation.
std::vector<Tensor> fuse_features_backward(std::span<const Tensor* const> activations,
                                           const Tensor& dfused);

/// Arithmetic mean of stage predictions.
ProbMap fuse_intermediate_predictions(std::span<const ProbMap* const> preds);

/// One optional slice per phase, indexed by index_of(PhaseId).
using PhaseImages = std::array<std::optional<Tensor>, kNumPhases>;

/// Axial slice z of every phase present in the study.
PhaseImages slice_images(const Study& study, int z);

class CoHeteroNet {
 public:
  struct ViewPass {
    ViewCombo combo;
    Trunk::Pass trunk;
    StageOutputs out;
  };
  /// Stems run once per phase and are shared by every view of the slice.
  struct Pass {
    std::array<std::optional<Stem::Pass>, kNumPhases> stems;
    std::vector<ViewPass> views;
  };

  explicit CoHeteroNet(const BackboneConfig& cfg);

  const BackboneConfig& config() const noexcept { return cfg_; }
  std::vector<double>& params() noexcept { return params_; }
  const std::vector<double>& params() const noexcept { return params_; }
  const Stem& stem(PhaseId p) const noexcept { return stems_[static_cast<std::size_t>(index_of(p))]; }
  const Trunk& trunk() const noexcept { return trunk_; }

  void init(std::uint64_t seed);

  /// Copies pretrained stages 1-2 into every stem and stages 3-5 into the
  /// trunk; the variance half of the widened stage-3 input is zeroed.
  void load_pretrained(const PhnnNet& pretrained);

  /// Stage outputs for one view. Stage 1-2 logits and probabilities are the
  /// means of the per-phase ones; the trunk accumulates onto the mean
  /// stage-2 logits.
  StageOutputs forward(const PhaseImages& images, const ViewCombo& combo) const;

  Pass forward_views(const PhaseImages& images, std::span<const ViewCombo> combos) const;
  /// `grads[i]` is dL/dprobs for `pass.views[i]`.
  void backward_views(const Pass& pass, std::span<const StageGrads> grads,
                      std::span<double> grad) const;

 private:
  ViewPass run_view(const Pass& pass, const ViewCombo& combo) const;

  BackboneConfig cfg_;
  std::array<Stem, kNumPhases> stems_;
  Trunk trunk_;
  std::vector<double> params_;
};

/// Batch mean of the staged loss of the singleton {V} view over labeled
/// slices. `finals` receives each item's final-stage prediction if non-null.
double labeled_seg_loss(const CoHeteroNet& net, std::span<const LabeledSlice> batch,
                        const ClassWeights& weights, std::span<double> grad = {},
                        std::vector<ProbMap>* finals = nullptr);

}  // namespace chase
