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

#include "core/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "core/error.hpp"

namespace chase {

double dsc(const BinaryMask& pred, const BinaryMask& gt) {
  CHASE_REQUIRE(pred.same_shape(gt), "dsc: mask shapes differ");
  std::size_t p = 0, g = 0, both = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool a = pred.data[i] != 0, b = gt.data[i] != 0;
    p += a;
    g += b;
    both += a && b;
  }
  if (p + g == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(p + g);
}

BinaryMask surface_voxels(const BinaryMask& m) {
  BinaryMask s(m.d, m.h, m.w, 0);
  auto fg = [&](int z, int y, int x) {
    return z >= 0 && y >= 0 && x >= 0 && z < m.d && y < m.h && x < m.w && m(z, y, x) != 0;
  };
  for (int z = 0; z < m.d; ++z) {
    for (int y = 0; y < m.h; ++y) {
      for (int x = 0; x < m.w; ++x) {
        if (!m(z, y, x)) continue;
        if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
            !fg(z, y, x - 1) || !fg(z, y, x + 1)) {
          s(z, y, x) = 1;
        }
      }
    }
  }
  return s;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1D squared-distance transform (lower envelope of parabolas) with sample
// spacing `step`. f holds squared distances (inf for no site).
void edt_1d(const std::vector<double>& f, double step, std::vector<double>& out,
            std::vector<int>& v, std::vector<double>& zb) {
  const int n = static_cast<int>(f.size());
  out.assign(n, kInf);
  v.assign(n, 0);
  zb.assign(n + 1, 0.0);
  const double s2 = step * step;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    double s = -kInf;
    while (k >= 0) {
      const int p = v[k];
      s = ((f[q] + s2 * q * q) - (f[p] + s2 * p * p)) / (2.0 * s2 * (q - p));
      if (s > zb[k]) break;
      --k;
    }
    ++k;
    v[k] = q;
    zb[k] = k == 0 ? -kInf : s;
    zb[k + 1] = kInf;
  }
  if (k < 0) return;
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (zb[j + 1] < q) ++j;
    const double d = step * (q - v[j]);
    out[q] = d * d + f[v[j]];
  }
}

// Squared Euclidean distance (physical units) to the nearest site.
std::vector<double> squared_edt(const BinaryMask& sites, const Spacing& sp) {
  const int D = sites.d, H = sites.h, W = sites.w;
  std::vector<double> g(sites.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = sites.data[i] ? 0.0 : kInf;
  std::vector<double> line, out, zb;
  std::vector<int> v;
  auto pass = [&](int n, double step, auto index) {
    line.resize(n);
    for (int i = 0; i < n; ++i) line[i] = g[index(i)];
    edt_1d(line, step, out, v, zb);
    for (int i = 0; i < n; ++i) g[index(i)] = out[i];
  };
  for (int z = 0; z < D; ++z)
    for (int y = 0; y < H; ++y) pass(W, sp.x, [&](int i) { return sites.index(z, y, i); });
  for (int z = 0; z < D; ++z)
    for (int x = 0; x < W; ++x) pass(H, sp.y, [&](int i) { return sites.index(z, i, x); });
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) pass(D, sp.z, [&](int i) { return sites.index(i, y, x); });
  return g;
}

}  // namespace

std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, const Spacing& spacing) {
  CHASE_REQUIRE(pred.same_shape(gt), "assd: mask shapes differ");
  CHASE_REQUIRE(spacing.z > 0 && spacing.y > 0 && spacing.x > 0, "assd: spacing must be positive");
  const BinaryMask sp = surface_voxels(pred);
  const BinaryMask sg = surface_voxels(gt);
  const auto np = std::count(sp.data.begin(), sp.data.end(), 1);
  const auto ng = std::count(sg.data.begin(), sg.data.end(), 1);
  if (np == 0 || ng == 0) return std::nullopt;
  const std::vector<double> to_gt = squared_edt(sg, spacing);
  const std::vector<double> to_pred = squared_edt(sp, spacing);
  double sum = 0.0;
  for (std::size_t i = 0; i < sp.size(); ++i) {
    if (sp.data[i]) sum += std::sqrt(to_gt[i]);
    if (sg.data[i]) sum += std::sqrt(to_pred[i]);
  }
  return sum / static_cast<double>(np + ng);
}

LabelMask stack_slices(std::span<const LabelImage> slices, const Spacing& spacing) {
  CHASE_REQUIRE(!slices.empty(), "nothing to stack");
  const int h = slices[0].h, w = slices[0].w;
  LabelMask m;
  m.spacing = spacing;
  m.labels = Grid3<std::uint8_t>(static_cast<int>(slices.size()), h, w);
  for (std::size_t z = 0; z < slices.size(); ++z) {
    CHASE_REQUIRE(slices[z].h == h && slices[z].w == w, "stacked slices differ in shape");
    std::copy(slices[z].data.begin(), slices[z].data.end(),
              m.labels.data.begin() + static_cast<std::ptrdiff_t>(z * slices[z].data.size()));
  }
  return m;
}

BinaryMask majority_vote(std::span<const BinaryMask> masks) {
  CHASE_REQUIRE(!masks.empty(), "majority vote needs at least one mask");
  const std::size_t n = masks.size();
  const std::size_t need = (n + 2) / 2;  // ceil((n+1)/2)
  BinaryMask out(masks[0].d, masks[0].h, masks[0].w, 0);
  for (const auto& m : masks) CHASE_REQUIRE(m.same_shape(out), "voted masks differ in shape");
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::size_t votes = 0;
    for (const auto& m : masks) votes += m.data[i] != 0;
    out.data[i] = votes >= need ? 1 : 0;
  }
  return out;
}

BinaryMask liver_region(const LabelMask& labels) {
  BinaryMask out(labels.labels.d, labels.labels.h, labels.labels.w, 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto v = labels.labels.data[i];
    out.data[i] = (v == kLiver || v == kLesion) ? 1 : 0;
  }
  return out;
}

LabelMask predict_volume(const PhnnNet& net, const Study& study, PhaseId phase) {
  const auto it = study.phases.find(phase);
  CHASE_REQUIRE(it != study.phases.end(), "study lacks the requested phase");
  std::vector<LabelImage> slices;
  for (int z = 0; z < it->second.voxels.d; ++z) {
    slices.push_back(argmax_labels(net.forward(it->second.slice(z)).final()));
  }
  return stack_slices(slices, it->second.spacing);
}

LabelMask predict_volume(const CoHeteroNet& net, const Study& study, const ViewCombo& combo) {
  for (PhaseId p : combo.phases) {
    CHASE_REQUIRE(study.phases.count(p), "study lacks phase " + std::string(phase_name(p)));
  }
  std::vector<LabelImage> slices;
  const int depth = study.depth();
  for (int z = 0; z < depth; ++z) {
    slices.push_back(argmax_labels(net.forward(slice_images(study, z), combo).final()));
  }
  return stack_slices(slices, study.phases.begin()->second.spacing);
}

std::string_view eval_mode_name(EvalMode m) noexcept {
  switch (m) {
    case EvalMode::SinglePhase: return "single-phase";
    case EvalMode::AllAvailable: return "all-available";
    case EvalMode::AllCombos: return "all-15-combos";
  }
  return "?";
}

EvalMode parse_eval_mode(std::string_view s) {
  if (s == "single-phase" || s == "single") return EvalMode::SinglePhase;
  if (s == "all-available" || s == "all") return EvalMode::AllAvailable;
  if (s == "all-15-combos" || s == "combos") return EvalMode::AllCombos;
  throw ConfigError("unknown evaluation mode '" + std::string(s) + "'");
}

std::vector<ViewCombo> combos_for_mode(EvalMode mode) {
  switch (mode) {
    case EvalMode::SinglePhase:
      return {ViewCombo::of({PhaseId::NC}), ViewCombo::of({PhaseId::A}), ViewCombo::of({PhaseId::V}),
              ViewCombo::of({PhaseId::D})};
    case EvalMode::AllCombos:
      return enumerate_views(kAllPhases);
    case EvalMode::AllAvailable:
      return {};
  }
  return {};
}

BoxStats box_stats(std::vector<double> v) {
  BoxStats b;
  if (v.empty()) return b;
  std::sort(v.begin(), v.end());
  auto q = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  b.min = v.front();
  b.q1 = q(0.25);
  b.median = q(0.5);
  b.q3 = q(0.75);
  b.max = v.back();
  return b;
}

namespace {

constexpr std::string_view kMetricsHeader = "model,study,combo,status,dsc,assd,tace,reason";

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace

LabelMask predict_with(const SegModel& model, const Study& study, const ViewCombo& combo) {
  if (model.rule == FusionRule::Hetero) {
    const auto* co = std::get_if<const CoHeteroNet*>(&model.net);
    CHASE_REQUIRE(co != nullptr, "hetero fusion requires a co-hetero network");
    return predict_volume(**co, study, combo);
  }
  // Majority vote over single-phase liver-region masks.
  std::vector<LabelMask> per_phase;
  for (PhaseId p : combo.phases) {
    if (const auto* pn = std::get_if<const PhnnNet*>(&model.net)) {
      per_phase.push_back(predict_volume(**pn, study, p));
    } else {
      per_phase.push_back(predict_volume(**std::get_if<const CoHeteroNet*>(&model.net), study,
                                         ViewCombo::of({p})));
    }
  }
  if (per_phase.size() == 1) return per_phase.front();
  std::vector<BinaryMask> regions;
  for (const auto& m : per_phase) regions.push_back(liver_region(m));
  LabelMask out;
  out.spacing = per_phase.front().spacing;
  out.labels = majority_vote(regions);  // values {0,1}: background / liver region
  return out;
}

MetricReport evaluate(const SegModel& model, std::span<const Study> test, EvalMode mode,
                      std::span<const ViewCombo> combos) {
  MetricReport rep;
  rep.model = model.name;
  const std::vector<ViewCombo> defaults = combos_for_mode(mode);
  const std::span<const ViewCombo> wanted = combos.empty() ? std::span<const ViewCombo>(defaults) : combos;
  for (const Study& s : test) {
    CHASE_REQUIRE(s.mask.has_value(), "evaluation study " + s.id + " has no reference mask");
    const BinaryMask gt = liver_region(*s.mask);
    std::vector<ViewCombo> todo;
    std::vector<std::string> labels;
    if (mode == EvalMode::AllAvailable && combos.empty()) {
      todo.push_back(ViewCombo::of(s.available_phases()));
      labels.emplace_back("all");
    } else {
      for (const ViewCombo& c : wanted) {
        todo.push_back(c);
        labels.push_back(c.name());
      }
    }
    for (std::size_t i = 0; i < todo.size(); ++i) {
      MetricRow row;
      row.study = s.id;
      row.combo = labels[i];
      row.tace = s.tace;
      std::string missing;
      for (PhaseId p : todo[i].phases) {
        if (!s.phases.count(p)) missing += (missing.empty() ? "" : "+") + std::string(phase_name(p));
      }
      if (!missing.empty()) {
        row.skip_reason = "missing phase " + missing;
        rep.rows.push_back(std::move(row));
        continue;
      }
      const LabelMask pred = predict_with(model, s, todo[i]);
      const BinaryMask pr = liver_region(pred);
      row.scored = true;
      row.dsc = dsc(pr, gt);
      row.assd = assd(pr, gt, s.mask->spacing);
      rep.rows.push_back(std::move(row));
    }
  }
  rep.summary = summarize(rep.rows);
  return rep;
}

std::vector<ComboSummary> summarize(const std::vector<MetricRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> acc;
  for (const MetricRow& r : rows) {
    if (!acc.count(r.combo)) order.push_back(r.combo);
    auto& [d, a] = acc[r.combo];
    if (!r.scored) continue;
    d.push_back(r.dsc);
    if (r.assd) a.push_back(*r.assd);
  }
  std::vector<ComboSummary> out;
  for (const auto& name : order) {
    const auto& [d, a] = acc[name];
    ComboSummary cs;
    cs.combo = name;
    cs.count = static_cast<int>(d.size());
    cs.mean_dsc = mean_of(d);
    cs.std_dsc = std_of(d);
    cs.assd_count = static_cast<int>(a.size());
    cs.mean_assd = mean_of(a);
    cs.std_assd = std_of(a);
    cs.dsc_box = box_stats(d);
    out.push_back(cs);
  }
  return out;
}

std::optional<double> MetricReport::mean_dsc(const std::string& combo, bool tace_only) const {
  std::vector<double> v;
  for (const MetricRow& r : rows) {
    if (r.combo == combo && r.scored && (!tace_only || r.tace)) v.push_back(r.dsc);
  }
  if (v.empty()) return std::nullopt;
  return mean_of(v);
}

std::string metrics_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << kMetricsHeader << '\n';
  for (const auto& rep : reports) {
    for (const MetricRow& r : rep.rows) {
      os << rep.model << ',' << r.study << ',' << r.combo << ',' << (r.scored ? "scored" : "skipped")
         << ',' << (r.scored ? fmt(r.dsc) : "") << ',' << (r.assd ? fmt(*r.assd) : "") << ','
         << (r.tace ? 1 : 0) << ',' << r.skip_reason << '\n';
    }
  }
  return os.str();
}

std::string summary_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "model,combo,n,mean_dsc,std_dsc,n_assd,mean_assd,std_assd\n";
  for (const auto& rep : reports) {
    for (const ComboSummary& s : rep.summary) {
      os << rep.model << ',' << s.combo << ',' << s.count << ',' << fmt(s.mean_dsc) << ','
         << fmt(s.std_dsc) << ',' << s.assd_count << ',' << fmt(s.mean_assd) << ','
         << fmt(s.std_assd) << '\n';
    }
  }
  return os.str();
}

std::string box_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "model,combo,min,q1,median,q3,max\n";
  for (const auto& rep : reports) {
    for (const ComboSummary& s : rep.summary) {
      os << rep.model << ',' << s.combo << ',' << fmt(s.dsc_box.min) << ',' << fmt(s.dsc_box.q1)
         << ',' << fmt(s.dsc_box.median) << ',' << fmt(s.dsc_box.q3) << ',' << fmt(s.dsc_box.max)
         << '\n';
    }
  }
  return os.str();
}

std::string summary_text(std::span<const MetricReport> reports) {
  std::ostringstream os;
  char line[256];
  for (const auto& rep : reports) {
    os << "== " << rep.model << " ==\n";
    std::snprintf(line, sizeof line, "%-14s %5s %10s %10s\n", "combo", "n", "DSC(%)", "ASSD");
    os << line;
    for (const ComboSummary& s : rep.summary) {
      std::snprintf(line, sizeof line, "%-14s %5d %10.2f %10.3f\n", s.combo.c_str(), s.count,
                    100.0 * s.mean_dsc, s.mean_assd);
      os << line;
    }
    int skipped = 0;
    for (const auto& r : rep.rows) skipped += !r.scored;
    if (skipped) os << "(" << skipped << " study/combo pairs skipped for missing phases)\n";
  }
  return os.str();
}

std::vector<MetricReport> parse_metrics_csv(std::string_view text) {
  std::vector<MetricReport> out;
  bool header = true;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    if (header) {
      if (line != kMetricsHeader) throw IoError(IoError::Kind::MalformedHeader, "not a metrics table");
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        f.emplace_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 8) {
      throw IoError(IoError::Kind::MalformedHeader, "metrics line " + std::to_string(line_no) + ": expected 8 fields");
    }
    if (out.empty() || out.back().model != f[0]) {
      out.emplace_back();
      out.back().model = f[0];
    }
    MetricRow r;
    r.study = f[1];
    r.combo = f[2];
    r.scored = f[3] == "scored";
    try {
      if (r.scored) r.dsc = std::stod(f[4]);
      if (!f[5].empty()) r.assd = std::stod(f[5]);
    } catch (const std::exception&) {
      throw IoError(IoError::Kind::MalformedHeader, "metrics line " + std::to_string(line_no) + ": bad number");
    }
    r.tace = f[6] == "1";
    r.skip_reason = f[7];
    out.back().rows.push_back(std::move(r));
  }
  for (auto& rep : out) rep.summary = summarize(rep.rows);
  return out;
}

}  // namespace chase
