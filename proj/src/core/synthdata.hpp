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

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "core/error.hpp"
#include "core/tensor.hpp"

namespace chase {

/// Contrast phase of a dynamic CT acquisition. Ordering NC < A < V < D.
enum class PhaseId : std::uint8_t { NC = 0, A = 1, V = 2, D = 3 };

inline constexpr std::array<PhaseId, 4> kAllPhases{PhaseId::NC, PhaseId::A, PhaseId::V,
                                                  PhaseId::D};
inline constexpr int kNumPhases = 4;

inline int index_of(PhaseId p) noexcept { return static_cast<int>(p); }
std::string_view phase_name(PhaseId p) noexcept;
/// Accepts "NC", "A", "V", "D" (case-insensitive).
PhaseId parse_phase(std::string_view name);

/// Physical voxel size in (z, y, x) order.
struct Spacing {
  double z = 1.5;
  double y = 1.0;
  double x = 1.0;
  bool operator==(const Spacing&) const = default;
};

/// Dense 3D array in C order (z slowest).
template <class T>
struct Grid3 {
  int d = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Grid3() = default;
  Grid3(int depth, int height, int width, T fill = T{})
      : d(depth), h(height), w(width),
        data(static_cast<std::size_t>(depth) * height * width, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t index(int z, int y, int x) const noexcept {
    return (static_cast<std::size_t>(z) * h + y) * w + x;
  }
  T& operator()(int z, int y, int x) { return data[index(z, y, x)]; }
  const T& operator()(int z, int y, int x) const { return data[index(z, y, x)]; }
  bool same_shape(const Grid3<T>& o) const noexcept { return d == o.d && h == o.h && w == o.w; }
  template <class U>
  bool same_shape(const Grid3<U>& o) const noexcept {
    return d == o.d && h == o.h && w == o.w;
  }
  bool operator==(const Grid3&) const = default;
};

struct Volume {
  Grid3<float> voxels;
  Spacing spacing;
  bool operator==(const Volume&) const = default;

  /// Axial slice z as a single-channel tensor.
  Tensor slice(int z) const;
};

struct LabelMask {
  Grid3<std::uint8_t> labels;
  Spacing spacing;
  bool operator==(const LabelMask&) const = default;

  LabelImage slice(int z) const;
  /// Throws ContractError if a value outside {0,1,2,IGNORE} occurs.
  void check_values() const;
};

enum class Domain { Source, Target };
std::string_view domain_name(Domain d) noexcept;

struct Study {
  std::string id;
  Domain domain = Domain::Source;
  std::map<PhaseId, Volume> phases;
  std::optional<LabelMask> mask;
  /// Carries a treated-lesion analog (target only).
  bool tace = false;

  std::vector<PhaseId> available_phases() const;
  int depth() const;
  /// Throws ContractError on inconsistent shapes or an empty phase set.
  void validate() const;
};

/// Mean intensity of each tissue class for one contrast phase.
struct PhaseAppearance {
  double body = 0.32;
  double liver = 0.64;
  double lesion = 0.40;
  double spleen = 0.56;
  double bone = 0.90;
};

struct SynthConfig {
  std::uint64_t seed = 7;

  int source_train = 60;
  int source_val = 8;
  int source_test = 12;
  int target_unlabeled = 120;
  int target_val = 8;
  int target_test = 30;

  int depth = 16;
  int height = 32;
  int width = 32;
  Spacing spacing{};

  std::array<PhaseAppearance, 4> appearance{
      PhaseAppearance{0.30, 0.42, 0.36, 0.40, 0.90},  // NC
      PhaseAppearance{0.32, 0.50, 0.68, 0.62, 0.90},  // A
      PhaseAppearance{0.32, 0.64, 0.40, 0.56, 0.90},  // V
      PhaseAppearance{0.32, 0.56, 0.46, 0.52, 0.90},  // D
  };
  double noise_sigma = 0.03;
  double texture_amplitude = 0.03;
  int max_lesions = 2;

  // Target-only shift.
  double target_bias = 0.04;
  double target_organ_scale = 1.06;
  double tace_prob = 0.3;
  double tace_intensity = 0.02;  // treated-lesion analog, identical in every phase
  double missing_phase_prob = 0.2;

  void validate() const;
  int count(Domain d) const noexcept {
    return d == Domain::Source ? source_train + source_val + source_test
                               : target_unlabeled + target_val + target_test;
  }
};

/// One generated study with its full reference labels.
struct GeneratedStudy {
  Study study;     // mask populated only for labeled splits
  LabelMask truth; // always present, for evaluation
};

enum class Split { Train, Val, Test, Unlabeled, Holes };
std::string_view split_name(Split s) noexcept;
Split parse_split(std::string_view s);

/// Which split the index-th study of a domain belongs to.
Split split_of(const SynthConfig& cfg, Domain domain, int index);

GeneratedStudy generate_study(const SynthConfig& cfg, Domain domain, int index);

struct Datasets {
  std::vector<Study> labeled;          // D_l: source training studies (V + mask)
  std::vector<Study> source_val;
  std::vector<Study> source_test;
  std::vector<Study> unlabeled;        // D_u: target, masks withheld
  std::vector<Study> target_val;       // labeled target validation
  std::vector<Study> target_test;      // labeled target test
  std::map<std::string, LabelMask> unlabeled_truth;  // held out, evaluation only
};

Datasets generate_datasets(const SynthConfig& cfg);

/// Sampled augmentation ranges. A collapsed range gives the identity.
struct AugmentParams {
  double min_rotation_deg = -10.0;
  double max_rotation_deg = 10.0;
  double min_scale = 0.92;
  double max_scale = 1.08;
  double min_gamma = 0.85;
  double max_gamma = 1.18;
  double elastic_alpha = 1.0;  // max control-point displacement, pixels
  int elastic_grid = 4;

  static AugmentParams identity() { return {0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, 4}; }
};

struct AugmentedSlice {
  Tensor image;
  std::optional<LabelImage> mask;
};

/// Rotation, elastic deformation, gamma and scaling drawn from `seed`.
/// Images are sampled bilinearly, masks by nearest neighbour.
AugmentedSlice augment(const Tensor& image, const std::optional<LabelImage>& mask,
                       const AugmentParams& params, std::uint64_t seed);

/// Stable 64-bit mixing of seeds (splitmix64 finaliser).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace chase
