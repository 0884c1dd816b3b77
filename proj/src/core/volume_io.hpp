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

// Raw little-endian volumes with a plain-text sidecar header, plus the
// tab-separated dataset manifest.
//
//   <path>       payload, C order (z slowest), float32 or uint8
//   <path>.hdr   chase-volume 1 / dtype / shape D H W / spacing z y x / labels

#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "core/synthdata.hpp"

namespace chase {

void write_volume(const std::filesystem::path& path, const Volume& v);
void write_volume(const std::filesystem::path& path, const LabelMask& m);

std::variant<Volume, LabelMask> read_volume(const std::filesystem::path& path);
Volume read_image(const std::filesystem::path& path);
LabelMask read_labels(const std::filesystem::path& path);

std::filesystem::path header_path(const std::filesystem::path& payload);

struct ManifestRecord {
  std::string id;
  Domain domain = Domain::Source;
  Split split = Split::Train;
  std::vector<PhaseId> phases;
  std::vector<std::string> files;  // one per phase, relative to the manifest
  std::string mask;                // "" when absent
  std::string truth;               // held-out reference, "" when absent
  bool tace = false;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Writes every study's volumes under `dir` and a `manifest.tsv` index.
void save_datasets(const Datasets& ds, const std::filesystem::path& dir);
Datasets load_datasets(const std::filesystem::path& dir);

/// Loads one manifest record's study (phases + visible mask).
Study load_study(const std::filesystem::path& dir, const ManifestRecord& rec);

}  // namespace chase
