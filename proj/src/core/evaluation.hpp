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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "core/backbone.hpp"
#include "core/heterofusion.hpp"
#include "core/synthdata.hpp"

namespace chase {

using BinaryMask = Grid3<std::uint8_t>;

/// 2|P & G| / (|P| + |G|); two empty masks score 1.
double dsc(const BinaryMask& pred, const BinaryMask& gt);

/// Average symmetric surface distance in physical units. Surface voxels are
/// foreground voxels with at least one 6-neighbour outside the mask (the
/// volume border counts as outside). Empty input gives no value.
std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing);

/// Foreground voxels with a background (or out-of-volume) 6-neighbour.
BinaryMask surface_voxels(const BinaryMask& mask);

/// Concatenates axial label slices into a volume.
LabelMask stack_slices(std::span<const LabelImage> slices, const Spacing& spacing = {});

/// Foreground where at least ceil((n+1)/2) masks agree; even ties go to background.
BinaryMask majority_vote(std::span<const BinaryMask> masks);

/// 1 where the label is liver or lesion.
BinaryMask liver_region(const LabelMask& labels);

/// Slice-wise prediction stacked into a 3D label volume.
LabelMask predict_volume(const PhnnNet& net, const Study& study, PhaseId phase);
LabelMask predict_volume(const CoHeteroNet& net, const Study& study, const ViewCombo& combo);

enum class EvalMode { SinglePhase, AllAvailable, AllCombos };
std::string_view eval_mode_name(EvalMode m) noexcept;
EvalMode parse_eval_mode(std::string_view s);

/// How a model turns several phases into one mask.
enum class FusionRule {
  Hetero,       // co-hetero network consumes the phase set directly
  MajorityVote  // single-phase predictions, voted
};

struct SegModel {
  std::string name;
  std::variant<const PhnnNet*, const CoHeteroNet*> net;
  FusionRule rule = FusionRule::Hetero;
};

struct MetricRow {
  std::string study;
  std::string combo;
  bool scored = false;
  double dsc = 0.0;
  std::optional<double> assd;
  std::string skip_reason;
  bool tace = false;
};

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};
BoxStats box_stats(std::vector<double> values);

struct ComboSummary {
  std::string combo;
  int count = 0;
  double mean_dsc = 0.0;
  double std_dsc = 0.0;
  int assd_count = 0;
  double mean_assd = 0.0;
  double std_assd = 0.0;
  BoxStats dsc_box;
};

struct MetricReport {
  std::string model;
  std::vector<MetricRow> rows;
  std::vector<ComboSummary> summary;

  /// Mean DSC of scored rows for `combo` (optionally restricted to TACE studies).
  std::optional<double> mean_dsc(const std::string& combo, bool tace_only = false) const;
};

/// Labels for one study under a model's fusion rule. Majority-voted
/// predictions carry liver-region labels {0, 1}.
LabelMask predict_with(const SegModel& model, const Study& study, const ViewCombo& combo);

/// Combos evaluated for a study under a mode (canonical order).
std::vector<ViewCombo> combos_for_mode(EvalMode mode);

/// Scores each (study, combo); studies missing a phase are listed as skipped.
/// `combos` overrides the mode's default combo list when non-empty.
MetricReport evaluate(const SegModel& model, std::span<const Study> test, EvalMode mode,
                      std::span<const ViewCombo> combos = {});

std::vector<ComboSummary> summarize(const std::vector<MetricRow>& rows);

std::string metrics_csv(std::span<const MetricReport> reports);
std::string summary_csv(std::span<const MetricReport> reports);
std::string box_csv(std::span<const MetricReport> reports);
std::string summary_text(std::span<const MetricReport> reports);

/// Inverse of metrics_csv; summaries are recomputed.
std::vector<MetricReport> parse_metrics_csv(std::string_view text);

}  // namespace chase
