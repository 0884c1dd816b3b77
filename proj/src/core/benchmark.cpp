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

#include "core/benchmark.hpp"

#include <cstdio>
#include <fstream>

#include "core/checkpoint.hpp"
#include "core/error.hpp"
#include "core/pseudolabel.hpp"

namespace chase {
namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + path.string());
  os << text;
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + path.string());
}

double require_mean(const MetricReport& r, const std::string& combo, bool tace_only = false) {
  const auto v = r.mean_dsc(combo, tace_only);
  return v.value_or(0.0);
}

}  // namespace

std::string benchmark_csv(const BenchmarkSummary& s) {
  std::string out = "metric,value\n";
  char line[128];
  auto row = [&](const char* name, double v) {
    std::snprintf(line, sizeof line, "%s,%.6f\n", name, v);
    out += line;
  };
  row("baseline_nc_dsc", s.baseline_nc);
  row("baseline_v_dsc", s.baseline_v);
  row("baseline_all_dsc", s.baseline_all);
  row("chase_nc_dsc", s.chase_nc);
  row("chase_all_dsc", s.chase_all);
  row("finetune_all_dsc", s.finetune_all);
  row("chase_tace_dsc", s.chase_tace);
  row("finetune_tace_dsc", s.finetune_tace);
  row("pretrain_val_dsc", s.pretrain_val_dsc);
  std::snprintf(line, sizeof line, "tace_studies,%d\nholes_studies,%d\n", s.tace_studies, s.holes_studies);
  out += line;
  return out;
}

BenchmarkResult run_benchmark(const RunConfig& cfg, const std::filesystem::path& out_dir,
                              const ProgressFn& progress) {
  cfg.validate();
  const bool write = !out_dir.empty();
  if (write) std::filesystem::create_directories(out_dir);
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };

  const Datasets data = generate_datasets(cfg.synth);
  say("generated " + std::to_string(data.labeled.size()) + " labeled and " +
      std::to_string(data.unlabeled.size()) + " unlabeled studies");

  const PretrainResult pre = pretrain(cfg, data.labeled, data.source_val, progress);
  BenchmarkResult result;
  BenchmarkSummary& s = result.summary;
  s.pretrain_val_dsc = pre.best_val_dsc;

  const SegModel baseline{"baseline", &pre.net, FusionRule::MajorityVote};
  MetricReport base = evaluate(baseline, data.target_test, EvalMode::SinglePhase);
  const MetricReport base_all = evaluate(baseline, data.target_test, EvalMode::AllAvailable);
  base.rows.insert(base.rows.end(), base_all.rows.begin(), base_all.rows.end());
  base.summary = summarize(base.rows);
  s.baseline_nc = require_mean(base, "NC");
  s.baseline_v = require_mean(base, "V");
  s.baseline_all = require_mean(base, "all");
  say("baseline evaluated");

  CoHeteroModels init = init_cohetero_from_pretrained(pre.net, cfg);
  ChaseState chase(std::move(init.net), std::move(init.disc), cfg.train);
  const ChaseData chase_data{data.labeled, data.unlabeled, data.target_val, {}};
  const ChaseResult chase_run = run_chase(chase, cfg, cfg.train.chase_epochs, chase_data, progress);

  const SegModel chase_model{"chase", &chase.net, FusionRule::Hetero};
  // The 15 combos include the four single-phase views.
  MetricReport ch = evaluate(chase_model, data.target_test, EvalMode::AllCombos);
  const MetricReport ch_all = evaluate(chase_model, data.target_test, EvalMode::AllAvailable);
  ch.rows.insert(ch.rows.end(), ch_all.rows.begin(), ch_all.rows.end());
  ch.summary = summarize(ch.rows);
  s.chase_nc = require_mean(ch, "NC");
  s.chase_all = require_mean(ch, "all");
  s.chase_tace = require_mean(ch, "all", true);
  say("joint model evaluated");

  const HolesDataset holes = build_holes_dataset(chase.net, data.unlabeled, cfg.train.hole_min_size);
  s.holes_studies = static_cast<int>(holes.studies.size());
  say("holes found in " + std::to_string(s.holes_studies) + " unlabeled studies");

  ChaseState fine(chase.net, chase.disc, cfg.train);
  const ChaseData fine_data{data.labeled, data.unlabeled, data.target_val, holes.studies};
  const ChaseResult fine_run = run_chase(fine, cfg, cfg.train.finetune_epochs, fine_data, progress);

  const SegModel fine_model{"finetune", &fine.net, FusionRule::Hetero};
  const MetricReport ft = evaluate(fine_model, data.target_test, EvalMode::AllAvailable);
  s.finetune_all = require_mean(ft, "all");
  s.finetune_tace = require_mean(ft, "all", true);
  for (const Study& st : data.target_test) s.tace_studies += st.tace;

  result.reports = {base, ch, ft};
  if (write) {
    write_text(out_dir / "metrics.csv", metrics_csv(result.reports));
    write_text(out_dir / "summary.csv", summary_csv(result.reports));
    write_text(out_dir / "box.csv", box_csv(result.reports));
    write_text(out_dir / "summary.txt", summary_text(result.reports));
    write_text(out_dir / "benchmark.csv", benchmark_csv(s));
    write_text(out_dir / "config.txt", cfg.to_text());
    write_text(out_dir / "loss_log_train.csv", loss_log_csv(chase_run.log));
    write_text(out_dir / "loss_log_finetune.csv", loss_log_csv(fine_run.log));
    save_phnn(out_dir / "pretrained.ckpt", pre.net, cfg.to_text());
    save_cohetero(out_dir / "chase.ckpt", chase.net, &chase.disc, chase.step, cfg.to_text());
    save_cohetero(out_dir / "finetuned.ckpt", fine.net, &fine.disc, fine.step, cfg.to_text());
  }
  return result;
}

}  // namespace chase
