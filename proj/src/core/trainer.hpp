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

#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "core/ada.hpp"
#include "core/backbone.hpp"
#include "core/config.hpp"
#include "core/consistency.hpp"
#include "core/heterofusion.hpp"
#include "core/optim.hpp"
#include "core/pseudolabel.hpp"

namespace chase {

using ProgressFn = std::function<void(const std::string&)>;

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;     // mean training loss over the epoch
  double val_dsc = 0.0;  // mean liver-region DSC on the validation split
  double lr = 0.0;       // learning rate used during the epoch
};

/// Mean liver-region DSC of venous-phase predictions.
double validation_dsc(const PhnnNet& net, std::span<const Study> val);
/// Mean liver-region DSC using every available phase.
double validation_dsc(const CoHeteroNet& net, std::span<const Study> val);

struct PretrainResult {
  PhnnNet net;  // best-validation parameters
  double best_val_dsc = 0.0;
  int best_epoch = -1;
  std::vector<EpochRecord> history;
};

/// Supervised venous-phase training with Adam and a plateau schedule.
PretrainResult pretrain(const RunConfig& cfg, std::span<const Study> labeled,
                        std::span<const Study> val, const ProgressFn& progress = {});

struct CoHeteroModels {
  CoHeteroNet net;
  Discriminator disc;
};

/// Stems and trunk copied from the pretrained network; fresh discriminator.
CoHeteroModels init_cohetero_from_pretrained(const PhnnNet& pretrained, const RunConfig& cfg);

/// min(k, 2^n - 1) distinct views of `available`, uniformly without replacement.
std::vector<ViewCombo> sample_views(std::span<const PhaseId> available, int k, std::mt19937_64& rng);

struct ChaseState {
  CoHeteroNet net;
  Discriminator disc;
  SgdMomentum seg_opt;
  Adam disc_opt;
  long step = 0;
  long total_steps = 1;

  ChaseState(CoHeteroNet net, Discriminator disc, const TrainConfig& cfg);
};

struct StepBatch {
  std::vector<LabeledSlice> labeled;
  std::vector<UnlabeledSlice> unlabeled;  // empty combos are sampled by the step
  std::vector<HolesSlice> holes;          // combos must be filled by the caller
};

struct SegSubstep {
  double l_seg = 0.0;    // labeled term plus lambda_h * holes term
  double l_holes = 0.0;
  double l_cons = 0.0;
  double l_adv = 0.0;
  std::vector<Tensor> source_regions;          // liver-region maps of the labeled batch
  std::vector<Discriminator::Pass> target;     // single target discriminator forward
};

/// Segmentation update with the discriminator frozen.
SegSubstep segmentation_substep(ChaseState& state, const TrainConfig& cfg,
                                const ClassWeights& weights, StepBatch& batch,
                                std::mt19937_64& rng);
/// Discriminator update with the segmentation network frozen; reuses the
/// target forward of the segmentation substep.
DiscriminatorLossResult discriminator_substep(ChaseState& state, const TrainConfig& cfg,
                                              const SegSubstep& seg);

struct StepLosses {
  long step = 0;
  double l_seg = 0.0;
  double l_cons = 0.0;
  double l_adv = 0.0;
  double l_d = 0.0;
  double total = 0.0;  // l_seg + l_cons + lambda_adv * l_adv
  double disc_lr = 0.0;
};

StepLosses chase_step(ChaseState& state, const TrainConfig& cfg, const ClassWeights& weights,
                      StepBatch& batch, std::mt19937_64& rng);

std::string loss_log_csv(std::span<const StepLosses> rows);

struct ChaseData {
  std::span<const Study> labeled;
  std::span<const Study> unlabeled;
  std::span<const Study> val;
  std::span<const Study> holes;  // empty outside the finetune stage
};

struct ChaseResult {
  std::vector<EpochRecord> history;
  std::vector<StepLosses> log;
};

/// Joint training loop. With a non-empty holes set the segmentation loss
/// gains the pseudo-label term; the holes draws use their own random stream.
ChaseResult run_chase(ChaseState& state, const RunConfig& cfg, int epochs, const ChaseData& data,
                      const ProgressFn& progress = {});

}  // namespace chase
