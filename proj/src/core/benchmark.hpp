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

// End-to-end synthetic benchmark: source-only baseline, joint training and
// holes finetune, all evaluated on the target test split.

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "core/config.hpp"
#include "core/evaluation.hpp"
#include "core/trainer.hpp"

namespace chase {

struct BenchmarkSummary {
  double baseline_nc = 0.0;    // mean liver-region DSC, NC-only input
  double baseline_v = 0.0;     // V-only input
  double baseline_all = 0.0;   // every available phase, majority vote
  double chase_nc = 0.0;
  double chase_all = 0.0;
  double finetune_all = 0.0;
  double chase_tace = 0.0;     // all-phase DSC on TACE-analog studies
  double finetune_tace = 0.0;
  int tace_studies = 0;
  int holes_studies = 0;
  double pretrain_val_dsc = 0.0;
};

struct BenchmarkResult {
  BenchmarkSummary summary;
  std::vector<MetricReport> reports;
};

/// Runs the full pipeline. When `out_dir` is non-empty the metric tables,
/// loss logs and a headline CSV are written there.
BenchmarkResult run_benchmark(const RunConfig& cfg, const std::filesystem::path& out_dir = {},
                              const ProgressFn& progress = {});

std::string benchmark_csv(const BenchmarkSummary& s);

}  // namespace chase
