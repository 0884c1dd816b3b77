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

// chase: command-line driver over the C API.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "chase/chase.h"

namespace {

struct Options {
  std::string config;
  long long seed = -1;
  std::string out;
  std::string mode;
  std::string checkpoint;
  std::string data = "data";
  std::string holes;
  std::vector<std::string> inputs;
};

int fail(const char* what) {
  std::fprintf(stderr, "chase: %s: %s\n", what, chase_last_error());
  return 1;
}

void print_line(const char* line, void*) {
  std::printf("%s\n", line);
  std::fflush(stdout);
}

chase_config* make_config(const Options& o) {
  chase_config* cfg = nullptr;
  const chase_status st = o.config.empty() ? chase_config_new(&cfg) : chase_config_load(o.config.c_str(), &cfg);
  if (st != CHASE_OK) return nullptr;
  if (o.seed >= 0 && chase_config_set_seed(cfg, static_cast<uint64_t>(o.seed)) != CHASE_OK) {
    chase_config_free(cfg);
    return nullptr;
  }
  return cfg;
}

std::string or_default(const std::string& v, const char* fallback) { return v.empty() ? fallback : v; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multi-phase liver segmentation on synthetic studies"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Flat key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Master seed for data generation and training")->check(CLI::NonNegativeNumber);
    sub->add_option("--out", o.out, "Output directory");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic source and target studies");
  common(gen);

  auto* pre = app.add_subcommand("pretrain", "Supervised venous-phase pretraining");
  common(pre);
  pre->add_option("--data", o.data, "Dataset directory")->capture_default_str();

  auto* train = app.add_subcommand("train", "Joint co-heterogeneous and adversarial training");
  common(train);
  train->add_option("--data", o.data, "Dataset directory")->capture_default_str();
  train->add_option("--checkpoint", o.checkpoint, "Pretrained checkpoint")->required();

  auto* holes = app.add_subcommand("build-holes", "Extract hole pseudo-labels from a trained model");
  common(holes);
  holes->add_option("--data", o.data, "Dataset directory")->capture_default_str();
  holes->add_option("--checkpoint", o.checkpoint, "Joint-training checkpoint")->required();

  auto* fine = app.add_subcommand("finetune", "Finetune with the holes pseudo-labels");
  common(fine);
  fine->add_option("--data", o.data, "Dataset directory")->capture_default_str();
  fine->add_option("--checkpoint", o.checkpoint, "Joint-training checkpoint")->required();
  fine->add_option("--holes", o.holes, "Holes dataset directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the target test split");
  common(eval);
  eval->add_option("--data", o.data, "Dataset directory")->capture_default_str();
  eval->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--mode", o.mode, "single-phase | all-available | all-15-combos | a combo such as NC+V");

  auto* report = app.add_subcommand("report", "Merge evaluation outputs, or run the full benchmark");
  common(report);
  report->add_option("--mode", o.mode, "merge (default) | benchmark");
  report->add_option("inputs", o.inputs, "Evaluation directories to merge");

  CLI11_PARSE(app, argc, argv);
  chase_set_log(print_line, nullptr);

  chase_config* cfg = make_config(o);
  if (!cfg) return fail("config");
  int rc = 0;
  auto run = [&](chase_status st, const char* what) {
    if (st != CHASE_OK) rc = fail(what);
  };

  if (gen->parsed()) {
    const std::string out = or_default(o.out, "data");
    run(chase_generate_data(cfg, out.c_str()), "gen-data");
  } else if (pre->parsed()) {
    const std::string out = or_default(o.out, "runs/pretrain");
    run(chase_pretrain(cfg, o.data.c_str(), out.c_str()), "pretrain");
    if (!rc) std::printf("checkpoint: %s/pretrained.ckpt\n", out.c_str());
  } else if (train->parsed()) {
    const std::string out = or_default(o.out, "runs/train");
    run(chase_train(cfg, o.data.c_str(), o.checkpoint.c_str(), out.c_str()), "train");
    if (!rc) std::printf("checkpoint: %s/chase.ckpt\n", out.c_str());
  } else if (holes->parsed()) {
    const std::string out = or_default(o.out, "holes");
    run(chase_build_holes(cfg, o.data.c_str(), o.checkpoint.c_str(), out.c_str()), "build-holes");
  } else if (fine->parsed()) {
    const std::string out = or_default(o.out, "runs/finetune");
    run(chase_finetune(cfg, o.data.c_str(), o.checkpoint.c_str(), o.holes.c_str(), out.c_str()), "finetune");
    if (!rc) std::printf("checkpoint: %s/finetuned.ckpt\n", out.c_str());
  } else if (eval->parsed()) {
    const std::string out = or_default(o.out, "eval");
    const std::string mode = or_default(o.mode, "all-available");
    run(chase_evaluate(o.data.c_str(), o.checkpoint.c_str(), mode.c_str(), out.c_str()), "eval");
    if (!rc) std::printf("metrics: %s/metrics.csv\n", out.c_str());
  } else if (report->parsed()) {
    const std::string out = or_default(o.out, "report");
    const std::string mode = or_default(o.mode, "merge");
    if (mode == "benchmark") {
      run(chase_run_benchmark(cfg, out.c_str()), "report");
    } else if (mode == "merge") {
      std::vector<const char*> dirs;
      for (const auto& d : o.inputs) dirs.push_back(d.c_str());
      run(chase_report(dirs.data(), dirs.size(), out.c_str()), "report");
    } else {
      std::fprintf(stderr, "chase: report: unknown mode '%s'\n", mode.c_str());
      rc = 2;
    }
    if (!rc) std::printf("report: %s/summary.txt\n", out.c_str());
  }
  chase_config_free(cfg);
  return rc;
}
