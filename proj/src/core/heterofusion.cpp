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

#include "core/heterofusion.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "core/error.hpp"

namespace chase {

namespace {

unsigned phase_bit(PhaseId p) { return 8u >> index_of(p); }

}  // namespace

ViewCombo ViewCombo::of(std::vector<PhaseId> phases) {
  CHASE_REQUIRE(!phases.empty(), "a view needs at least one phase");
  std::sort(phases.begin(), phases.end());
  CHASE_REQUIRE(std::adjacent_find(phases.begin(), phases.end()) == phases.end(),
                "duplicate phase in view");
  return ViewCombo{std::move(phases)};
}

ViewCombo ViewCombo::from_bits(unsigned bits) {
  CHASE_REQUIRE(bits >= 1 && bits <= 15, "view bit mask must be in [1,15]");
  std::vector<PhaseId> ps;
  for (PhaseId p : kAllPhases) {
    if (bits & phase_bit(p)) ps.push_back(p);
  }
  return ViewCombo{std::move(ps)};
}

ViewCombo ViewCombo::parse(std::string_view text) {
  std::vector<PhaseId> ps;
  std::string tok;
  std::istringstream is{std::string(text)};
  while (std::getline(is, tok, '+')) ps.push_back(parse_phase(tok));
  return of(std::move(ps));
}

unsigned ViewCombo::bits() const noexcept {
  unsigned b = 0;
  for (PhaseId p : phases) b |= phase_bit(p);
  return b;
}

bool ViewCombo::contains(PhaseId p) const noexcept {
  return std::find(phases.begin(), phases.end(), p) != phases.end();
}

std::string ViewCombo::name() const {
  std::string out;
  for (PhaseId p : phases) {
    if (!out.empty()) out += '+';
    out += phase_name(p);
  }
  return out;
}

std::vector<ViewCombo> enumerate_views(std::span<const PhaseId> available) {
  CHASE_REQUIRE(!available.empty(), "enumerate_views needs at least one phase");
  unsigned avail = 0;
  for (PhaseId p : available) avail |= phase_bit(p);
  std::vector<ViewCombo> out;
  for (unsigned b = 1; b <= 15; ++b) {
    if ((b & avail) == b) out.push_back(ViewCombo::from_bits(b));
  }
  return out;
}

Tensor fuse_features(std::span<const Tensor* const> acts) {
  CHASE_REQUIRE(!acts.empty(), "fusion needs at least one activation");
  const Tensor& ref = *acts[0];
  for (const Tensor* a : acts) CHASE_REQUIRE(a->same_shape(ref), "fusion inputs differ in shape");
  const std::size_t n = ref.size();
  const double inv = 1.0 / static_cast<double>(acts.size());
  Tensor out(2 * ref.c, ref.h, ref.w);
  double* mean = out.data.data();
  double* var = out.data.data() + n;
  for (const Tensor* a : acts) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += a->data[i];
  }
  for (std::size_t i = 0; i < n; ++i) mean[i] *= inv;
  if (acts.size() > 1) {
    for (const Tensor* a : acts) {
      for (std::size_t i = 0; i < n; ++i) {
        const double d = a->data[i] - mean[i];
        var[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < n; ++i) var[i] *= inv;
  }
  return out;
}

std::vector<Tensor> fuse_features_backward(std::span<const Tensor* const> acts,
                                           const Tensor& dfused) {
  const Tensor& ref = *acts[0];
  CHASE_REQUIRE(dfused.c == 2 * ref.c && dfused.h == ref.h && dfused.w == ref.w,
                "fusion gradient shape mismatch");
  const std::size_t n = ref.size();
  const double inv = 1.0 / static_cast<double>(acts.size());
  std::vector<double> mean(n, 0.0);
  for (const Tensor* a : acts) {
    for (std::size_t i = 0; i < n; ++i) mean[i] += a->data[i];
  }
  for (double& m : mean) m *= inv;
  const double* dmean = dfused.data.data();
  const double* dvar = dfused.data.data() + n;
  std::vector<Tensor> out;
  out.reserve(acts.size());
  for (const Tensor* a : acts) {
    Tensor d(ref.c, ref.h, ref.w);
    for (std::size_t i = 0; i < n; ++i) {
      // d var / d a_j = 2 (a_j - mean) / P; the mean's own dependence cancels.
      d.data[i] = inv * (dmean[i] + 2.0 * (a->data[i] - mean[i]) * dvar[i]);
    }
    out.push_back(std::move(d));
  }
  return out;
}

ProbMap fuse_intermediate_predictions(std::span<const ProbMap* const> preds) {
  CHASE_REQUIRE(!preds.empty(), "nothing to fuse");
  ProbMap out(preds[0]->c, preds[0]->h, preds[0]->w);
  for (const ProbMap* p : preds) {
    CHASE_REQUIRE(p->same_shape(out), "fused predictions differ in shape");
    out += *p;
  }
  out *= 1.0 / static_cast<double>(preds.size());
  return out;
}

PhaseImages slice_images(const Study& study, int z) {
  PhaseImages out;
  for (const auto& [p, v] : study.phases) out[static_cast<std::size_t>(index_of(p))] = v.slice(z);
  return out;
}

// ---------------------------------------------------------------------------

CoHeteroNet::CoHeteroNet(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::ParamLayout layout;
  for (auto& s : stems_) s = Stem::make(layout, cfg_);
  trunk_ = Trunk::make(layout, cfg_, 2 * cfg_.channels[1]);
  params_.assign(layout.size, 0.0);
}

void CoHeteroNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& s : stems_) s.init(params_, rng);
  trunk_.init(params_, rng);
}

void CoHeteroNet::load_pretrained(const PhnnNet& pre) {
  if (!(pre.config() == cfg_)) throw ConfigError("pretrained backbone configuration differs");
  const auto& src = pre.params();
  const Stem& ps = pre.stem();
  for (const Stem& s : stems_) {
    std::copy(src.begin() + static_cast<std::ptrdiff_t>(ps.begin),
              src.begin() + static_cast<std::ptrdiff_t>(ps.end),
              params_.begin() + static_cast<std::ptrdiff_t>(s.begin));
  }
  // Trunk: identical layout except the first stage-3 convolution, whose input
  // doubles to (mean || variance).
  const Trunk& pt = pre.trunk();
  const nn::Conv2d& src_conv = pt.stages[0].convs[0];
  const nn::Conv2d& dst_conv = trunk_.stages[0].convs[0];
  const int kk = src_conv.kernel * src_conv.kernel;
  dst_conv.zero(params_);
  for (int o = 0; o < src_conv.out; ++o) {
    for (int i = 0; i < src_conv.in; ++i) {
      for (int k = 0; k < kk; ++k) {
        params_[dst_conv.offset + (static_cast<std::size_t>(o) * dst_conv.in + i) * kk + k] =
            src[src_conv.offset + (static_cast<std::size_t>(o) * src_conv.in + i) * kk + k];
      }
    }
    params_[dst_conv.bias_offset() + o] = src[src_conv.bias_offset() + o];
  }
  // Everything after that first convolution has matching shapes and order.
  const std::size_t src_rest = src_conv.offset + src_conv.param_count();
  const std::size_t dst_rest = dst_conv.offset + dst_conv.param_count();
  CHASE_REQUIRE(pt.end - src_rest == trunk_.end - dst_rest, "trunk layouts disagree");
  std::copy(src.begin() + static_cast<std::ptrdiff_t>(src_rest),
            src.begin() + static_cast<std::ptrdiff_t>(pt.end),
            params_.begin() + static_cast<std::ptrdiff_t>(dst_rest));
}

CoHeteroNet::ViewPass CoHeteroNet::run_view(const Pass& pass, const ViewCombo& requested) const {
  // Canonical order keeps the fusion sums independent of how the view was listed.
  const ViewCombo combo = ViewCombo::of(requested.phases);
  ViewPass vp;
  vp.combo = combo;
  std::vector<const Tensor*> feats, s1, s2, a1, a2;
  std::vector<const ProbMap*> p1, p2;
  for (PhaseId p : combo.phases) {
    const auto& sp = pass.stems[static_cast<std::size_t>(index_of(p))];
    CHASE_REQUIRE(sp.has_value(), "view requests phase " + std::string(phase_name(p)) +
                                      " which is not available");
    feats.push_back(&sp->s2);
    s1.push_back(&sp->score1);
    s2.push_back(&sp->score2);
    a1.push_back(&sp->acc1);
    a2.push_back(&sp->acc2);
    p1.push_back(&sp->prob1);
    p2.push_back(&sp->prob2);
  }
  StageOutputs& out = vp.out;
  out.scores[0] = fuse_intermediate_predictions(s1);
  out.scores[1] = fuse_intermediate_predictions(s2);
  out.logits[0] = fuse_intermediate_predictions(a1);
  out.logits[1] = fuse_intermediate_predictions(a2);
  out.probs[0] = fuse_intermediate_predictions(p1);
  out.probs[1] = fuse_intermediate_predictions(p2);
  const Tensor fused = fuse_features(feats);
  vp.trunk = trunk_.forward(params_, fused, out.logits[1], out);
  return vp;
}

CoHeteroNet::Pass CoHeteroNet::forward_views(const PhaseImages& images,
                                             std::span<const ViewCombo> combos) const {
  Pass pass;
  for (const ViewCombo& c : combos) {
    for (PhaseId p : c.phases) {
      const auto idx = static_cast<std::size_t>(index_of(p));
      if (pass.stems[idx]) continue;
      CHASE_REQUIRE(images[idx].has_value(), "view requests phase " + std::string(phase_name(p)) +
                                                 " which is not available");
      const Tensor& img = *images[idx];
      CHASE_REQUIRE(img.c == 1 && img.h == cfg_.height && img.w == cfg_.width,
                    "input slice does not match the backbone configuration");
      pass.stems[idx] = stems_[idx].forward(params_, img);
    }
  }
  for (const ViewCombo& c : combos) pass.views.push_back(run_view(pass, c));
  return pass;
}

StageOutputs CoHeteroNet::forward(const PhaseImages& images, const ViewCombo& combo) const {
  const ViewCombo one[1] = {combo};
  return std::move(forward_views(images, one).views.front().out);
}

void CoHeteroNet::backward_views(const Pass& pass, std::span<const StageGrads> grads,
                                 std::span<double> grad) const {
  CHASE_REQUIRE(grads.size() == pass.views.size(), "one gradient set per view expected");
  CHASE_REQUIRE(grad.size() == params_.size(), "gradient buffer size mismatch");
  std::array<Stem::Grad, kNumPhases> sg;
  for (std::size_t v = 0; v < pass.views.size(); ++v) {
    const ViewPass& vp = pass.views[v];
    const StageGrads& g = grads[v];
    const double inv = 1.0 / static_cast<double>(vp.combo.size());
    Tensor dacc2;
    const Tensor dfused = trunk_.backward(params_, vp.trunk, vp.out, g, grad, dacc2);
    std::vector<const Tensor*> feats;
    for (PhaseId p : vp.combo.phases) {
      feats.push_back(&pass.stems[static_cast<std::size_t>(index_of(p))]->s2);
    }
    const std::vector<Tensor> dfeats = fuse_features_backward(feats, dfused);
    for (std::size_t i = 0; i < vp.combo.phases.size(); ++i) {
      Stem::Grad& s = sg[static_cast<std::size_t>(index_of(vp.combo.phases[i]))];
      accumulate(s.dfeat, dfeats[i]);
      accumulate(s.dacc2, dacc2, inv);
      accumulate(s.dprob1, g.dprobs[0], inv);
      accumulate(s.dprob2, g.dprobs[1], inv);
    }
  }
  for (std::size_t p = 0; p < kNumPhases; ++p) {
    if (!pass.stems[p]) continue;
    const Stem::Grad& s = sg[p];
    if (s.dfeat.empty() && s.dacc2.empty() && s.dprob1.empty() && s.dprob2.empty()) continue;
    stems_[p].backward(params_, *pass.stems[p], s, grad);
  }
}

double labeled_seg_loss(const CoHeteroNet& net, std::span<const LabeledSlice> batch,
                        const ClassWeights& weights, std::span<double> grad,
                        std::vector<ProbMap>* finals) {
  CHASE_REQUIRE(!batch.empty(), "segmentation loss needs a non-empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  const ViewCombo venous[1] = {ViewCombo::of({PhaseId::V})};
  double total = 0.0;
  for (const LabeledSlice& item : batch) {
    PhaseImages images;
    images[static_cast<std::size_t>(index_of(PhaseId::V))] = item.image;
    const CoHeteroNet::Pass pass = net.forward_views(images, venous);
    const StageOutputs& out = pass.views[0].out;
    if (finals) finals->push_back(out.final());
    if (grad.empty()) {
      total += staged_seg_loss(out, item.mask, weights);
      continue;
    }
    StageGrads g[1];
    total += staged_seg_loss(out, item.mask, weights, &g[0], inv);
    net.backward_views(pass, g, grad);
  }
  return total * inv;
}

}  // namespace chase
