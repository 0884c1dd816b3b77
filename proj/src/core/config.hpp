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

// Flat "key = value" run configuration. Lines starting with '#' are
// comments; list values are comma separated. Unknown keys are errors.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "core/ada.hpp"
#include "core/backbone.hpp"
#include "core/synthdata.hpp"

namespace chase {

struct TrainConfig {
  std::uint64_t seed = 1;

  // Supervised pretraining (Adam, plateau schedule on validation DSC).
  int pretrain_epochs = 12;
  int pretrain_batch = 8;
  double pretrain_lr = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  int plateau_patience = 10;
  double plateau_factor = 0.1;

  // Joint training.
  int chase_epochs = 3;
  int steps_per_epoch = 40;  // 0: one pass over the unlabeled slice pool
  int labeled_batch = 8;
  int unlabeled_batch = 8;
  double seg_lr = 1e-5;
  double seg_momentum = 0.9;
  double disc_lr = 3e-4;
  double disc_poly_power = 0.9;
  double lambda_adv = 0.001;
  double lambda_h = 0.01;
  int combos_per_step = 4;
  bool detach_consensus = false;
  bool augment = true;

  // Holes finetune.
  int finetune_epochs = 2;
  int holes_batch = 4;
  int hole_min_size = 100;

  void validate() const;
};

struct RunConfig {
  SynthConfig synth;
  BackboneConfig backbone;
  DiscriminatorConfig disc;
  TrainConfig train;

  /// Sets one key from its text form; throws ConfigError on unknown keys or
  /// malformed values.
  void set(std::string_view key, std::string_view value);
  /// Applies every "key = value" line of `text`.
  void apply_text(std::string_view text);
  /// Seeds data generation and training from one value.
  void set_master_seed(std::uint64_t seed);
  /// Every key with its current value, one per line, in a fixed order.
  std::string to_text() const;
  void validate() const;

  static std::vector<std::string> keys();
};

RunConfig load_config(const std::filesystem::path& path);

}  // namespace chase
