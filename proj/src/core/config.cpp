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

#include "core/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "core/error.hpp"

namespace chase {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(trim(s.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

template <class T>
T parse_num(std::string_view key, std::string_view v) {
  v = trim(v);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("bad value '" + std::string(v) + "' for " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  v = trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

template <class T, std::size_t N>
void parse_array(std::string_view key, std::string_view v, std::array<T, N>& out) {
  const auto parts = split_list(v);
  if (parts.size() != N) {
    throw ConfigError(std::string(key) + " expects " + std::to_string(N) + " values");
  }
  for (std::size_t i = 0; i < N; ++i) out[i] = parse_num<T>(key, parts[i]);
}

// Shortest text that parses back to the same double.
std::string fmt(double v) {
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
template <class T, std::size_t N>
std::string fmt(const std::array<T, N>& a) {
  std::string s;
  for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + fmt(a[i]);
  return s;
}

struct Entry {
  std::string key;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
};

template <class T>
Entry scalar(std::string key, T& field) {
  Entry e;
  e.key = key;
  e.get = [&field] { return fmt(field); };
  if constexpr (std::is_same_v<T, bool>) {
    e.set = [&field, key](std::string_view v) { field = parse_bool(key, v); };
  } else {
    e.set = [&field, key](std::string_view v) { field = parse_num<T>(key, v); };
  }
  return e;
}

template <class T, std::size_t N>
Entry array(std::string key, std::array<T, N>& field) {
  return {key, [&field, key](std::string_view v) { parse_array(key, v, field); },
          [&field] { return fmt(field); }};
}

std::vector<Entry> table(RunConfig& c) {
  SynthConfig& s = c.synth;
  TrainConfig& t = c.train;
  std::vector<Entry> e = {
      scalar("synth.seed", s.seed),
      scalar("synth.source_train", s.source_train),
      scalar("synth.source_val", s.source_val),
      scalar("synth.source_test", s.source_test),
      scalar("synth.target_unlabeled", s.target_unlabeled),
      scalar("synth.target_val", s.target_val),
      scalar("synth.target_test", s.target_test),
      scalar("synth.depth", s.depth),
      scalar("synth.height", s.height),
      scalar("synth.width", s.width),
      {"synth.spacing",
       [&s](std::string_view v) {
         std::array<double, 3> a{};
         parse_array("synth.spacing", v, a);
         s.spacing = {a[0], a[1], a[2]};
       },
       [&s] { return fmt(std::array<double, 3>{s.spacing.z, s.spacing.y, s.spacing.x}); }},
  };
  for (PhaseId p : kAllPhases) {
    PhaseAppearance& a = s.appearance[static_cast<std::size_t>(index_of(p))];
    const std::string key = "synth.appearance." + std::string(phase_name(p));
    e.push_back({key,
                 [&a, key](std::string_view v) {
                   std::array<double, 5> x{};
                   parse_array(key, v, x);
                   a = {x[0], x[1], x[2], x[3], x[4]};
                 },
                 [&a] { return fmt(std::array<double, 5>{a.body, a.liver, a.lesion, a.spleen, a.bone}); }});
  }
  const std::vector<Entry> rest = {
      scalar("synth.noise_sigma", s.noise_sigma),
      scalar("synth.texture_amplitude", s.texture_amplitude),
      scalar("synth.max_lesions", s.max_lesions),
      scalar("synth.target_bias", s.target_bias),
      scalar("synth.target_organ_scale", s.target_organ_scale),
      scalar("synth.tace_prob", s.tace_prob),
      scalar("synth.tace_intensity", s.tace_intensity),
      scalar("synth.missing_phase_prob", s.missing_phase_prob),
      array("backbone.channels", c.backbone.channels),
      array("backbone.pool", c.backbone.pool),
      scalar("backbone.convs_per_stage", c.backbone.convs_per_stage),
      scalar("disc.width", c.disc.width),
      array("disc.dilations", c.disc.dilations),
      scalar("disc.negative_slope", c.disc.negative_slope),
      scalar("train.seed", t.seed),
      scalar("train.pretrain_epochs", t.pretrain_epochs),
      scalar("train.pretrain_batch", t.pretrain_batch),
      scalar("train.pretrain_lr", t.pretrain_lr),
      scalar("train.adam_beta1", t.adam_beta1),
      scalar("train.adam_beta2", t.adam_beta2),
      scalar("train.plateau_patience", t.plateau_patience),
      scalar("train.plateau_factor", t.plateau_factor),
      scalar("train.chase_epochs", t.chase_epochs),
      scalar("train.steps_per_epoch", t.steps_per_epoch),
      scalar("train.labeled_batch", t.labeled_batch),
      scalar("train.unlabeled_batch", t.unlabeled_batch),
      scalar("train.seg_lr", t.seg_lr),
      scalar("train.seg_momentum", t.seg_momentum),
      scalar("train.disc_lr", t.disc_lr),
      scalar("train.disc_poly_power", t.disc_poly_power),
      scalar("train.lambda_adv", t.lambda_adv),
      scalar("train.lambda_h", t.lambda_h),
      scalar("train.combos_per_step", t.combos_per_step),
      scalar("train.detach_consensus", t.detach_consensus),
      scalar("train.augment", t.augment),
      scalar("train.finetune_epochs", t.finetune_epochs),
      scalar("train.holes_batch", t.holes_batch),
      scalar("train.hole_min_size", t.hole_min_size),
  };
  e.insert(e.end(), rest.begin(), rest.end());
  return e;
}

}  // namespace

void TrainConfig::validate() const {
  auto positive = [](int v, const char* name) {
    if (v < 1) throw ConfigError(std::string(name) + " must be >= 1");
  };
  if (pretrain_epochs < 0 || chase_epochs < 0 || finetune_epochs < 0 || steps_per_epoch < 0) {
    throw ConfigError("epoch and step counts must be >= 0");
  }
  positive(pretrain_batch, "train.pretrain_batch");
  positive(labeled_batch, "train.labeled_batch");
  positive(unlabeled_batch, "train.unlabeled_batch");
  positive(holes_batch, "train.holes_batch");
  positive(combos_per_step, "train.combos_per_step");
  positive(plateau_patience, "train.plateau_patience");
  if (lambda_adv < 0 || lambda_h < 0) throw ConfigError("loss weights must be >= 0");
  if (!(pretrain_lr > 0) || !(seg_lr > 0) || !(disc_lr > 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (!(plateau_factor > 0 && plateau_factor <= 1)) throw ConfigError("plateau factor must be in (0, 1]");
  if (hole_min_size < 0) throw ConfigError("train.hole_min_size must be >= 0");
}

void RunConfig::set(std::string_view key, std::string_view value) {
  for (Entry& e : table(*this)) {
    if (e.key == key) {
      e.set(value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void RunConfig::apply_text(std::string_view text) {
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::set_master_seed(std::uint64_t seed) {
  synth.seed = seed;
  train.seed = seed;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const Entry& e : table(const_cast<RunConfig&>(*this))) os << e.key << " = " << e.get() << '\n';
  return os.str();
}

void RunConfig::validate() const {
  synth.validate();
  train.validate();
  BackboneConfig b = backbone;
  b.height = synth.height;
  b.width = synth.width;
  b.validate();
  if (disc.width < 1) throw ConfigError("disc.width must be >= 1");
  for (int d : disc.dilations) {
    if (d < 1) throw ConfigError("disc.dilations must be >= 1");
  }
}

std::vector<std::string> RunConfig::keys() {
  RunConfig c;
  std::vector<std::string> out;
  for (const Entry& e : table(c)) out.push_back(e.key);
  return out;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  RunConfig c;
  c.apply_text(ss.str());
  c.backbone.height = c.synth.height;
  c.backbone.width = c.synth.width;
  c.validate();
  return c;
}

}  // namespace chase
