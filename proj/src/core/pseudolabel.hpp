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

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "core/backbone.hpp"
#include "core/evaluation.hpp"
#include "core/heterofusion.hpp"
#include "core/synthdata.hpp"

namespace chase {

/// Background components (6-connected) of `region` that do not touch the
/// volume border and hold more than `min_size` voxels.
BinaryMask extract_holes(const BinaryMask& region, int min_size = 100);

/// Studies with a detected hole; each carries a pseudo mask that is lesion
/// inside holes and IGNORE elsewhere.
struct HolesDataset {
  std::vector<Study> studies;
  std::vector<int> hole_voxels;  // per study
};

/// Pseudo-labelled copy of `study` when the liver region of `pred` encloses
/// a hole: lesion inside holes, IGNORE elsewhere.
std::optional<Study> holes_study(const Study& study, const LabelMask& pred, int min_size = 100,
                                 int* hole_voxels = nullptr);

/// Runs the model on every available phase of each unlabeled study and keeps
/// the ones whose liver region encloses a hole.
HolesDataset build_holes_dataset(const CoHeteroNet& net, std::span<const Study> unlabeled,
                                 int min_size = 100);

/// Writes pseudo masks under `holes_dir/masks` and a manifest whose phase
/// files point back into `data_dir`.
void save_holes_dataset(const HolesDataset& holes, const std::filesystem::path& data_dir,
                        const std::filesystem::path& holes_dir);
HolesDataset load_holes_dataset(const std::filesystem::path& holes_dir);

/// One pseudo-labelled slice and the views sampled for it.
struct HolesSlice {
  PhaseImages images;
  LabelImage pseudo;
  std::vector<ViewCombo> combos;
};

/// Mean over items and views of the staged loss against the pseudo mask.
/// Gradients are scaled by `scale` before accumulation.
double holes_seg_loss(const CoHeteroNet& net, std::span<const HolesSlice> batch,
                      const ClassWeights& weights, std::span<double> grad = {},
                      double scale = 1.0);

struct PseudoSegLoss {
  double labeled = 0.0;
  double holes = 0.0;
  double total = 0.0;  // labeled + lambda_h * holes
};

/// Labeled loss plus the weighted pseudo-label term. An empty holes batch or
/// lambda_h == 0 reduces to labeled_seg_loss exactly.
PseudoSegLoss seg_loss_with_pseudo(const CoHeteroNet& net, std::span<const LabeledSlice> labeled,
                                   std::span<const HolesSlice> holes, const ClassWeights& weights,
                                   double lambda_h, std::span<double> grad = {});

}  // namespace chase
