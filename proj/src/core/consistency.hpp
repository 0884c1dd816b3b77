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

// Consensus prediction and Jensen-Shannon consistency across views.

#pragma once

#include <array>
#include <span>
#include <vector>

#include "core/heterofusion.hpp"
#include "core/tensor.hpp"

namespace chase {

/// Lower clamp applied to probabilities before taking logs.
inline constexpr double kProbEps = 1e-7;

/// Per-pixel mean of the predictions.
ProbMap consensus(std::span<const ProbMap* const> preds);

/// KL(p || q) over the three classes, natural log, q clamped below by kProbEps.
double kl_pixel(const std::array<double, kNumClasses>& p, const std::array<double, kNumClasses>& q);

/// Mean over views of the per-pixel-averaged KL(view || consensus).
/// When `dpreds` is non-null, scale * dL/dpred is added to (*dpreds)[v]; with
/// `detach_consensus` the consensus is treated as a constant.
double jsd_loss(std::span<const ProbMap* const> preds, std::vector<Tensor>* dpreds = nullptr,
                double scale = 1.0, bool detach_consensus = false);

/// One unlabeled multi-phase slice and the views sampled for it.
struct UnlabeledSlice {
  PhaseImages images;
  std::vector<ViewCombo> combos;
};

/// Batch mean of jsd_loss over each slice's final-stage view predictions.
/// Slices with fewer than two views contribute zero.
double cons_loss_batch(const CoHeteroNet& net, std::span<const UnlabeledSlice> batch,
                       std::span<double> grad = {}, bool detach_consensus = false);

}  // namespace chase
