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

// Model checkpoints: a one-line magic, a one-line JSON header describing the
// architecture and named parameter blocks, then the blocks as raw
// little-endian doubles in header order.

#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "core/ada.hpp"
#include "core/backbone.hpp"
#include "core/heterofusion.hpp"

namespace chase {

inline constexpr int kCheckpointVersion = 1;

enum class ModelKind { Phnn, CoHetero };

void save_phnn(const std::filesystem::path& path, const PhnnNet& net,
               const std::string& config_text = {});
PhnnNet load_phnn(const std::filesystem::path& path);

struct CoHeteroCheckpoint {
  CoHeteroNet net;
  std::optional<Discriminator> disc;
  long step = 0;
  std::string config_text;
};

void save_cohetero(const std::filesystem::path& path, const CoHeteroNet& net,
                   const Discriminator* disc, long step, const std::string& config_text = {});
CoHeteroCheckpoint load_cohetero(const std::filesystem::path& path);

ModelKind checkpoint_kind(const std::filesystem::path& path);

}  // namespace chase
