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

#include "chase/chase.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>

#include "core/benchmark.hpp"
#include "core/checkpoint.hpp"
#include "core/config.hpp"
#include "core/error.hpp"
#include "core/evaluation.hpp"
#include "core/pseudolabel.hpp"
#include "core/trainer.hpp"
#include "core/volume_io.hpp"

namespace fs = std::filesystem;
using namespace chase;

struct chase_config {
  RunConfig cfg;
};

struct chase_volume {
  std::variant<Volume, LabelMask> vol;
};

struct chase_model {
  std::variant<PhnnNet, CoHeteroNet> net;
};

namespace {

thread_local std::string g_last_error;
chase_log_fn g_log = nullptr;
void* g_log_user = nullptr;

void log_line(const std::string& s) {
  if (g_log) g_log(s.c_str(), g_log_user);
}

class BadArgument : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class F>
chase_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return CHASE_OK;
  } catch (const BadArgument& e) {
    g_last_error = e.what();
    return CHASE_ERR_INVALID_ARGUMENT;
  } catch (const ContractError& e) {
    g_last_error = e.what();
    return CHASE_ERR_CONTRACT;
  } catch (const ConfigError& e) {
    g_last_error = e.what();
    return CHASE_ERR_CONFIG;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return CHASE_ERR_IO;
  } catch (const fs::filesystem_error& e) {
    g_last_error = e.what();
    return CHASE_ERR_IO;
  } catch (const DivergenceError& e) {
    g_last_error = e.what();
    return CHASE_ERR_DIVERGENCE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CHASE_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CHASE_ERR_INTERNAL;
  }
}

template <class T>
T* need(T* p, const char* what) {
  if (!p) throw BadArgument(std::string(what) + " is null");
  return p;
}

std::string need_str(const char* s, const char* what) { return need(s, what); }

void check_shape(int d, int h, int w) {
  if (d < 1 || h < 1 || w < 1) throw BadArgument("volume dimensions must be positive");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + path.string());
  os << text;
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Kind::Unreadable, "cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_reports(const fs::path& dir, std::span<const MetricReport> reports) {
  fs::create_directories(dir);
  write_text(dir / "metrics.csv", metrics_csv(reports));
  write_text(dir / "summary.csv", summary_csv(reports));
  write_text(dir / "box.csv", box_csv(reports));
  write_text(dir / "summary.txt", summary_text(reports));
}

// Run directory: config snapshot plus per-epoch history.
void start_run(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", cfg.to_text());
}

std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,loss,val_dsc,lr\n";
  char line[160];
  for (const EpochRecord& r : h) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", r.epoch, r.loss, r.val_dsc, r.lr);
    out += line;
  }
  return out;
}

ChaseState load_state(const fs::path& ckpt, const RunConfig& cfg) {
  CoHeteroCheckpoint ck = load_cohetero(ckpt);
  Discriminator disc(cfg.disc);
  if (ck.disc) {
    disc = std::move(*ck.disc);
  } else {
    disc.init(mix_seed(cfg.train.seed, 0x44495343ULL));
  }
  ChaseState st(std::move(ck.net), std::move(disc), cfg.train);
  st.step = ck.step;
  return st;
}

}  // namespace

extern "C" {

const char* chase_version(void) { return "1.0.0"; }

const char* chase_last_error(void) { return g_last_error.c_str(); }

void chase_set_log(chase_log_fn fn, void* user) {
  g_log = fn;
  g_log_user = user;
}

chase_status chase_config_new(chase_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new chase_config{};
  });
}

chase_status chase_config_load(const char* path, chase_config** out) {
  return guarded([&] {
    need(out, "out");
    RunConfig c = load_config(need_str(path, "path"));
    *out = new chase_config{std::move(c)};
  });
}

chase_status chase_config_set(chase_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    RunConfig& c = need(cfg, "config")->cfg;
    RunConfig next = c;
    next.set(need_str(key, "key"), need_str(value, "value"));
    next.backbone.height = next.synth.height;
    next.backbone.width = next.synth.width;
    next.validate();
    c = std::move(next);
  });
}

chase_status chase_config_set_seed(chase_config* cfg, uint64_t seed) {
  return guarded([&] { need(cfg, "config")->cfg.set_master_seed(seed); });
}

chase_status chase_config_text(const chase_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const std::string text = need(cfg, "config")->cfg.to_text();
    if (needed) *needed = text.size() + 1;
    if (buf && cap > 0) {
      const std::size_t n = std::min(cap - 1, text.size());
      std::memcpy(buf, text.data(), n);
      buf[n] = '\0';
    }
  });
}

void chase_config_free(chase_config* cfg) { delete cfg; }

chase_status chase_generate_data(const chase_config* cfg, const char* data_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    const fs::path dir = need_str(data_dir, "data_dir");
    save_datasets(generate_datasets(c.synth), dir);
    write_text(dir / "config.txt", c.to_text());
    log_line("wrote " + std::to_string(c.synth.count(Domain::Source) + c.synth.count(Domain::Target)) +
             " studies to " + dir.string());
  });
}

chase_status chase_pretrain(const chase_config* cfg, const char* data_dir, const char* run_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    const fs::path run = need_str(run_dir, "run_dir");
    const Datasets ds = load_datasets(need_str(data_dir, "data_dir"));
    start_run(run, c);
    const PretrainResult r = pretrain(c, ds.labeled, ds.source_val, log_line);
    write_text(run / "pretrain_log.csv", history_csv(r.history));
    save_phnn(run / "pretrained.ckpt", r.net, c.to_text());
  });
}

chase_status chase_train(const chase_config* cfg, const char* data_dir, const char* pretrained_ckpt,
                         const char* run_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    const fs::path run = need_str(run_dir, "run_dir");
    const PhnnNet pre = load_phnn(need_str(pretrained_ckpt, "checkpoint"));
    const Datasets ds = load_datasets(need_str(data_dir, "data_dir"));
    start_run(run, c);
    CoHeteroModels m = init_cohetero_from_pretrained(pre, c);
    ChaseState st(std::move(m.net), std::move(m.disc), c.train);
    const ChaseResult r =
        run_chase(st, c, c.train.chase_epochs, {ds.labeled, ds.unlabeled, ds.target_val, {}}, log_line);
    write_text(run / "loss_log.csv", loss_log_csv(r.log));
    write_text(run / "epoch_log.csv", history_csv(r.history));
    save_cohetero(run / "chase.ckpt", st.net, &st.disc, st.step, c.to_text());
  });
}

chase_status chase_build_holes(const chase_config* cfg, const char* data_dir, const char* ckpt,
                               const char* holes_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    const fs::path data = need_str(data_dir, "data_dir");
    const CoHeteroCheckpoint ck = load_cohetero(need_str(ckpt, "checkpoint"));
    const Datasets ds = load_datasets(data);
    const HolesDataset h = build_holes_dataset(ck.net, ds.unlabeled, c.train.hole_min_size);
    save_holes_dataset(h, data, need_str(holes_dir, "holes_dir"));
    log_line("holes found in " + std::to_string(h.studies.size()) + " of " +
             std::to_string(ds.unlabeled.size()) + " unlabeled studies");
  });
}

chase_status chase_finetune(const chase_config* cfg, const char* data_dir, const char* ckpt,
                            const char* holes_dir, const char* run_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    const fs::path run = need_str(run_dir, "run_dir");
    ChaseState st = load_state(need_str(ckpt, "checkpoint"), c);
    const Datasets ds = load_datasets(need_str(data_dir, "data_dir"));
    const HolesDataset h = load_holes_dataset(need_str(holes_dir, "holes_dir"));
    start_run(run, c);
    const ChaseResult r = run_chase(st, c, c.train.finetune_epochs,
                                    {ds.labeled, ds.unlabeled, ds.target_val, h.studies}, log_line);
    write_text(run / "loss_log.csv", loss_log_csv(r.log));
    write_text(run / "epoch_log.csv", history_csv(r.history));
    save_cohetero(run / "finetuned.ckpt", st.net, &st.disc, st.step, c.to_text());
  });
}

chase_status chase_evaluate(const char* data_dir, const char* ckpt, const char* mode, const char* out_dir) {
  return guarded([&] {
    const fs::path ck = need_str(ckpt, "checkpoint");
    const std::string m = need_str(mode, "mode");
    const Datasets ds = load_datasets(need_str(data_dir, "data_dir"));
    EvalMode em = EvalMode::AllCombos;
    std::vector<ViewCombo> combos;
    try {
      em = parse_eval_mode(m);
    } catch (const ConfigError&) {
      try {
        combos.push_back(ViewCombo::parse(m));
      } catch (const std::exception&) {
        throw ConfigError("unknown evaluation mode '" + m + "'");
      }
    }
    std::optional<PhnnNet> phnn;
    std::optional<CoHeteroNet> co;
    SegModel model;
    model.name = ck.stem().string();
    if (checkpoint_kind(ck) == ModelKind::Phnn) {
      phnn = load_phnn(ck);
      model.net = &*phnn;
      model.rule = FusionRule::MajorityVote;
    } else {
      co = load_cohetero(ck).net;
      model.net = &*co;
      model.rule = FusionRule::Hetero;
    }
    const MetricReport rep = evaluate(model, ds.target_test, em, combos);
    write_reports(need_str(out_dir, "out_dir"), std::span(&rep, 1));
  });
}

chase_status chase_report(const char* const* eval_dirs, size_t count, const char* out_dir) {
  return guarded([&] {
    if (count > 0) need(eval_dirs, "eval_dirs");
    std::vector<MetricReport> all;
    for (std::size_t i = 0; i < count; ++i) {
      const fs::path dir = need_str(eval_dirs[i], "eval_dirs[i]");
      for (MetricReport& r : parse_metrics_csv(read_text(dir / "metrics.csv"))) all.push_back(std::move(r));
    }
    write_reports(need_str(out_dir, "out_dir"), all);
  });
}

chase_status chase_run_benchmark(const chase_config* cfg, const char* out_dir) {
  return guarded([&] {
    const RunConfig& c = need(cfg, "config")->cfg;
    run_benchmark(c, need_str(out_dir, "out_dir"), log_line);
  });
}

chase_status chase_volume_read(const char* path, chase_volume** out) {
  return guarded([&] {
    need(out, "out");
    *out = new chase_volume{read_volume(need_str(path, "path"))};
  });
}

chase_status chase_volume_write(const chase_volume* vol, const char* path) {
  return guarded([&] {
    const fs::path p = need_str(path, "path");
    std::visit([&](const auto& v) { write_volume(p, v); }, need(vol, "volume")->vol);
  });
}

chase_status chase_volume_new(chase_dtype dtype, int d, int h, int w, const double spacing[3],
                              const void* data, chase_volume** out) {
  return guarded([&] {
    need(out, "out");
    need(data, "data");
    check_shape(d, h, w);
    Spacing sp;
    if (spacing) sp = {spacing[0], spacing[1], spacing[2]};
    if (!(sp.z > 0 && sp.y > 0 && sp.x > 0)) throw BadArgument("spacing must be positive");
    const std::size_t n = static_cast<std::size_t>(d) * h * w;
    if (dtype == CHASE_FLOAT32) {
      Volume v{Grid3<float>(d, h, w), sp};
      std::memcpy(v.voxels.data.data(), data, n * sizeof(float));
      *out = new chase_volume{std::move(v)};
    } else if (dtype == CHASE_UINT8) {
      LabelMask m{Grid3<std::uint8_t>(d, h, w), sp};
      std::memcpy(m.labels.data.data(), data, n);
      *out = new chase_volume{std::move(m)};
    } else {
      throw BadArgument("unknown dtype");
    }
  });
}

chase_status chase_volume_info(const chase_volume* vol, chase_dtype* dtype, int shape[3], double spacing[3]) {
  return guarded([&] {
    need(vol, "volume");
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          int dd, hh, ww;
          if constexpr (std::is_same_v<T, Volume>) {
            if (dtype) *dtype = CHASE_FLOAT32;
            dd = v.voxels.d, hh = v.voxels.h, ww = v.voxels.w;
          } else {
            if (dtype) *dtype = CHASE_UINT8;
            dd = v.labels.d, hh = v.labels.h, ww = v.labels.w;
          }
          if (shape) shape[0] = dd, shape[1] = hh, shape[2] = ww;
          if (spacing) spacing[0] = v.spacing.z, spacing[1] = v.spacing.y, spacing[2] = v.spacing.x;
        },
        vol->vol);
  });
}

const void* chase_volume_data(const chase_volume* vol) {
  if (!vol) return nullptr;
  if (const auto* v = std::get_if<Volume>(&vol->vol)) return v->voxels.data.data();
  return std::get<LabelMask>(vol->vol).labels.data.data();
}

void chase_volume_free(chase_volume* vol) { delete vol; }

namespace {

BinaryMask wrap_mask(const uint8_t* p, int d, int h, int w) {
  check_shape(d, h, w);
  need(p, "mask");
  BinaryMask m(d, h, w);
  std::memcpy(m.data.data(), p, m.size());
  return m;
}

}  // namespace

chase_status chase_dsc(const uint8_t* pred, const uint8_t* gt, int d, int h, int w, double* out) {
  return guarded([&] { *need(out, "out") = dsc(wrap_mask(pred, d, h, w), wrap_mask(gt, d, h, w)); });
}

chase_status chase_assd(const uint8_t* pred, const uint8_t* gt, int d, int h, int w, const double spacing[3],
                        double* out, int* defined) {
  return guarded([&] {
    need(out, "out");
    need(defined, "defined");
    need(spacing, "spacing");
    const auto v = assd(wrap_mask(pred, d, h, w), wrap_mask(gt, d, h, w), {spacing[0], spacing[1], spacing[2]});
    *defined = v.has_value() ? 1 : 0;
    if (v) *out = *v;
  });
}

chase_status chase_extract_holes(const uint8_t* region, int d, int h, int w, int min_size, uint8_t* holes_out) {
  return guarded([&] {
    need(holes_out, "holes_out");
    if (min_size < 0) throw BadArgument("min_size must be >= 0");
    const BinaryMask holes = extract_holes(wrap_mask(region, d, h, w), min_size);
    std::memcpy(holes_out, holes.data.data(), holes.size());
  });
}

chase_status chase_model_load(const char* path, chase_model** out) {
  return guarded([&] {
    need(out, "out");
    const fs::path p = need_str(path, "path");
    if (checkpoint_kind(p) == ModelKind::Phnn) {
      *out = new chase_model{load_phnn(p)};
    } else {
      *out = new chase_model{load_cohetero(p).net};
    }
  });
}

chase_status chase_model_kind_of(const chase_model* model, chase_model_kind* kind) {
  return guarded([&] {
    need(kind, "kind");
    *kind = std::holds_alternative<PhnnNet>(need(model, "model")->net) ? CHASE_MODEL_PHNN : CHASE_MODEL_COHETERO;
  });
}

chase_status chase_model_predict(const chase_model* model, const chase_volume* const phases[4], const char* combo,
                                 uint8_t* labels_out) {
  return guarded([&] {
    need(model, "model");
    need(phases, "phases");
    need(labels_out, "labels_out");
    Study s;
    s.id = "input";
    s.domain = Domain::Target;
    for (PhaseId p : kAllPhases) {
      const chase_volume* v = phases[index_of(p)];
      if (!v) continue;
      const auto* img = std::get_if<Volume>(&v->vol);
      if (!img) throw BadArgument("phase volumes must be float32");
      s.phases.emplace(p, *img);
    }
    if (s.phases.empty()) throw BadArgument("no phase volumes given");
    s.validate();
    const std::string name = need_str(combo, "combo");
    const ViewCombo vc = name == "all" ? ViewCombo::of(s.available_phases()) : ViewCombo::parse(name);
    SegModel m;
    if (const auto* pn = std::get_if<PhnnNet>(&model->net)) {
      m.net = pn;
      m.rule = FusionRule::MajorityVote;
    } else {
      m.net = &std::get<CoHeteroNet>(model->net);
      m.rule = FusionRule::Hetero;
    }
    const LabelMask out = predict_with(m, s, vc);
    std::memcpy(labels_out, out.labels.data.data(), out.labels.size());
  });
}

void chase_model_free(chase_model* model) { delete model; }

}  // extern "C"
