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

#include "core/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace chase {

void BackboneConfig::validate() const {
  for (int c : channels) {
    if (c <= 0) throw ConfigError("backbone channels must be positive");
  }
  if (convs_per_stage < 1) throw ConfigError("convs_per_stage must be >= 1");
  int factor = 1;
  for (int p : pool) {
    if (p < 1) throw ConfigError("pool factors must be >= 1");
    factor *= p;
  }
  if (height < 1 || width < 1) throw ConfigError("input size must be positive");
  if (height % factor != 0 || width % factor != 0) {
    throw ConfigError("input size must be divisible by the total pooling factor " +
                      std::to_string(factor));
  }
}

// ---------------------------------------------------------------------------

ConvStage ConvStage::make(nn::ParamLayout& layout, int in, int out, int n) {
  ConvStage s;
  for (int i = 0; i < n; ++i) s.convs.push_back(nn::Conv2d::make(layout, i == 0 ? in : out, out, 3));
  return s;
}

void ConvStage::init(std::span<double> theta, std::mt19937_64& rng) const {
  for (const auto& c : convs) c.init(theta, rng);
}

Tensor ConvStage::forward(std::span<const double> theta, const Tensor& x, Cache* cache) const {
  if (cache) {
    cache->conv.assign(convs.size(), {});
    cache->act.assign(convs.size(), {});
  }
  Tensor cur = x;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    cur = convs[i].forward(theta, cur, cache ? &cache->conv[i] : nullptr);
    nn::leaky_relu(cur, 0.0);
    if (cache) cache->act[i] = cur;
  }
  return cur;
}

Tensor ConvStage::backward(std::span<const double> theta, const Cache& cache, Tensor dy,
                           std::span<double> grad, bool need_dx) const {
  for (std::size_t k = convs.size(); k-- > 0;) {
    nn::leaky_relu_backward(cache.act[k], dy, 0.0);
    dy = convs[k].backward(theta, cache.conv[k], dy, grad, need_dx || k > 0);
  }
  return dy;
}

// ---------------------------------------------------------------------------

Stem Stem::make(nn::ParamLayout& layout, const BackboneConfig& cfg) {
  Stem s;
  s.begin = layout.size;
  s.stage1 = ConvStage::make(layout, BackboneConfig::input_channels, cfg.channels[0], cfg.convs_per_stage);
  s.stage2 = ConvStage::make(layout, cfg.channels[0], cfg.channels[1], cfg.convs_per_stage);
  s.head1 = nn::Conv2d::make(layout, cfg.channels[0], kNumClasses, 1);
  s.head2 = nn::Conv2d::make(layout, cfg.channels[1], kNumClasses, 1);
  s.pool1 = cfg.pool[0];
  s.end = layout.size;
  return s;
}

void Stem::init(std::span<double> theta, std::mt19937_64& rng) const {
  stage1.init(theta, rng);
  stage2.init(theta, rng);
  head1.init(theta, rng);
  head2.init(theta, rng);
}

Stem::Pass Stem::forward(std::span<const double> theta, const Tensor& image) const {
  Pass p;
  const int H = image.h, W = image.w;
  p.s1 = stage1.forward(theta, image, &p.c1);
  p.score1 = nn::upsample_bilinear(head1.forward(theta, p.s1, &p.h1), H, W);
  const Tensor pooled = nn::max_pool(p.s1, pool1, &p.pool);
  p.s2 = stage2.forward(theta, pooled, &p.c2);
  p.score2 = nn::upsample_bilinear(head2.forward(theta, p.s2, &p.h2), H, W);
  p.acc1 = p.score1;
  p.acc2 = p.score1;
  p.acc2 += p.score2;
  p.prob1 = nn::softmax(p.acc1);
  p.prob2 = nn::softmax(p.acc2);
  return p;
}

void Stem::backward(std::span<const double> theta, const Pass& p, const Grad& g,
                    std::span<double> grad) const {
  const int H = p.acc1.h, W = p.acc1.w;
  Tensor dacc1 = g.dprob1.empty() ? Tensor(kNumClasses, H, W) : nn::softmax_backward(p.prob1, g.dprob1);
  Tensor dacc2 = g.dprob2.empty() ? Tensor(kNumClasses, H, W) : nn::softmax_backward(p.prob2, g.dprob2);
  if (!g.dacc2.empty()) dacc2 += g.dacc2;

  // acc1 = score1, acc2 = score1 + score2.
  Tensor dscore1 = dacc1;
  dscore1 += dacc2;
  const Tensor& dscore2 = dacc2;

  Tensor ds2 = head2.backward(theta, p.h2, nn::upsample_bilinear_backward(dscore2, p.s2.h, p.s2.w), grad);
  if (!g.dfeat.empty()) ds2 += g.dfeat;
  const Tensor dpooled = stage2.backward(theta, p.c2, std::move(ds2), grad, true);
  Tensor ds1 = nn::max_pool_backward(dpooled, p.pool, p.s1.c);
  ds1 += head1.backward(theta, p.h1, nn::upsample_bilinear_backward(dscore1, p.s1.h, p.s1.w), grad);
  stage1.backward(theta, p.c1, std::move(ds1), grad, false);
}

// ---------------------------------------------------------------------------

Trunk Trunk::make(nn::ParamLayout& layout, const BackboneConfig& cfg, int in_channels) {
  Trunk t;
  t.begin = layout.size;
  t.in_channels = in_channels;
  t.pools = {cfg.pool[1], cfg.pool[2], cfg.pool[3]};
  t.stages[0] = ConvStage::make(layout, in_channels, cfg.channels[2], cfg.convs_per_stage);
  t.stages[1] = ConvStage::make(layout, cfg.channels[2], cfg.channels[3], cfg.convs_per_stage);
  t.stages[2] = ConvStage::make(layout, cfg.channels[3], cfg.channels[4], cfg.convs_per_stage);
  for (int i = 0; i < 3; ++i) t.heads[i] = nn::Conv2d::make(layout, cfg.channels[2 + i], kNumClasses, 1);
  t.end = layout.size;
  return t;
}

void Trunk::init(std::span<double> theta, std::mt19937_64& rng) const {
  for (const auto& s : stages) s.init(theta, rng);
  for (const auto& h : heads) h.init(theta, rng);
}

Trunk::Pass Trunk::forward(std::span<const double> theta, const Tensor& feat, const Tensor& acc2,
                           StageOutputs& outs) const {
  CHASE_REQUIRE(feat.c == in_channels, "trunk input channel mismatch");
  Pass p;
  const int H = acc2.h, W = acc2.w;
  Tensor x = feat;
  const Tensor* prev = &acc2;
  for (int i = 0; i < 3; ++i) {
    p.stage_c[i] = x.c;
    x = nn::max_pool(x, pools[i], &p.pool[i]);
    x = stages[i].forward(theta, x, &p.cache[i]);
    p.out[i] = x;
    const int m = 2 + i;
    outs.scores[m] = nn::upsample_bilinear(heads[i].forward(theta, x, &p.head[i]), H, W);
    outs.logits[m] = *prev;
    outs.logits[m] += outs.scores[m];
    outs.probs[m] = nn::softmax(outs.logits[m]);
    prev = &outs.logits[m];
  }
  return p;
}

Tensor Trunk::backward(std::span<const double> theta, const Pass& p, const StageOutputs& outs,
                       const StageGrads& g, std::span<double> grad, Tensor& dacc2) const {
  const int H = outs.logits[2].h, W = outs.logits[2].w;
  // score_m feeds every accumulator at or after stage m.
  std::array<Tensor, 3> dout;
  Tensor running(kNumClasses, H, W);
  for (int i = 2; i >= 0; --i) {
    const int m = 2 + i;
    if (!g.dprobs[m].empty()) running += nn::softmax_backward(outs.probs[m], g.dprobs[m]);
    dout[i] = heads[i].backward(theta, p.head[i],
                                nn::upsample_bilinear_backward(running, p.out[i].h, p.out[i].w), grad);
  }
  if (dacc2.empty()) dacc2 = Tensor(kNumClasses, H, W);
  dacc2 += running;

  Tensor d = dout[2];
  for (int i = 2; i >= 0; --i) {
    Tensor din = stages[i].backward(theta, p.cache[i], std::move(d), grad, true);
    Tensor dprev = nn::max_pool_backward(din, p.pool[i], p.stage_c[i]);
    if (i == 0) return dprev;
    d = std::move(dprev);
    d += dout[i - 1];
  }
  return {};
}

// ---------------------------------------------------------------------------

PhnnNet::PhnnNet(const BackboneConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  nn::ParamLayout layout;
  stem_ = Stem::make(layout, cfg_);
  trunk_ = Trunk::make(layout, cfg_, cfg_.channels[1]);
  params_.assign(layout.size, 0.0);
}

void PhnnNet::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  stem_.init(params_, rng);
  trunk_.init(params_, rng);
}

void PhnnNet::zero_heads() {
  stem_.head1.zero(params_);
  stem_.head2.zero(params_);
  for (const auto& h : trunk_.heads) h.zero(params_);
}

PhnnNet::Pass PhnnNet::forward_pass(const Tensor& image) const {
  CHASE_REQUIRE(image.c == 1 && image.h == cfg_.height && image.w == cfg_.width,
                "input slice does not match the backbone configuration");
  Pass p;
  p.stem = stem_.forward(params_, image);
  p.out.scores[0] = p.stem.score1;
  p.out.scores[1] = p.stem.score2;
  p.out.logits[0] = p.stem.acc1;
  p.out.logits[1] = p.stem.acc2;
  p.out.probs[0] = p.stem.prob1;
  p.out.probs[1] = p.stem.prob2;
  p.trunk = trunk_.forward(params_, p.stem.s2, p.stem.acc2, p.out);
  return p;
}

StageOutputs PhnnNet::forward(const Tensor& image) const { return forward_pass(image).out; }

void PhnnNet::backward(const Pass& p, const StageGrads& g, std::span<double> grad) const {
  CHASE_REQUIRE(grad.size() == params_.size(), "gradient buffer size mismatch");
  Stem::Grad sg;
  sg.dfeat = trunk_.backward(params_, p.trunk, p.out, g, grad, sg.dacc2);
  sg.dprob1 = g.dprobs[0];
  sg.dprob2 = g.dprobs[1];
  stem_.backward(params_, p.stem, sg, grad);
}

// ---------------------------------------------------------------------------

ClassWeights prevalence_weights(std::span<const Study> labeled) {
  std::array<double, kNumClasses> counts{};
  double total = 0.0;
  for (const Study& s : labeled) {
    CHASE_REQUIRE(s.mask.has_value(), "prevalence weights need labeled studies");
    for (std::uint8_t v : s.mask->labels.data) {
      if (v < kNumClasses) {
        counts[v] += 1.0;
        total += 1.0;
      }
    }
  }
  ClassWeights cw;
  if (total == 0.0) return cw;
  double sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    const double freq = std::max(counts[c], 1.0) / total;
    cw.w[c] = 1.0 / freq;
    sum += cw.w[c];
  }
  for (double& w : cw.w) w *= kNumClasses / sum;
  return cw;
}

double cross_entropy(const ProbMap& p, const LabelImage& y, const ClassWeights& weights,
                     Tensor* dprob, double scale) {
  CHASE_REQUIRE(p.c == kNumClasses && p.h == y.h && p.w == y.w, "prediction/label shape mismatch");
  constexpr double kFloor = std::numeric_limits<double>::min();
  const int n = p.plane();
  int valid = 0;
  for (std::uint8_t v : y.data) {
    if (v != kIgnore) {
      CHASE_REQUIRE(v < kNumClasses, "label out of range");
      ++valid;
    }
  }
  if (valid == 0) return 0.0;
  if (dprob && dprob->empty()) *dprob = Tensor(p.c, p.h, p.w);
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::uint8_t lab = y.data[static_cast<std::size_t>(i)];
    if (lab == kIgnore) continue;
    const std::size_t k = static_cast<std::size_t>(lab) * n + i;
    const double pk = std::max(p.data[k], kFloor);
    loss -= weights.w[lab] * std::log(pk);
    if (dprob) dprob->data[k] -= scale * weights.w[lab] / (valid * pk);
  }
  return loss / valid;
}

double staged_seg_loss(const StageOutputs& outs, const LabelImage& y, const ClassWeights& weights,
                       StageGrads* grads, double scale) {
  double loss = 0.0;
  for (int m = 0; m < kNumStages; ++m) {
    const double wm = static_cast<double>(m + 1) / kNumStages;
    loss += wm * cross_entropy(outs.probs[m], y, weights, grads ? &grads->dprobs[m] : nullptr,
                               scale * wm);
  }
  return loss;
}

double supervised_loss(const PhnnNet& net, std::span<const LabeledSlice> batch,
                       const ClassWeights& weights, std::span<double> grad) {
  CHASE_REQUIRE(!batch.empty(), "supervised loss needs a non-empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const LabeledSlice& item : batch) {
    if (grad.empty()) {
      total += staged_seg_loss(net.forward(item.image), item.mask, weights);
      continue;
    }
    const PhnnNet::Pass pass = net.forward_pass(item.image);
    StageGrads g;
    total += staged_seg_loss(pass.out, item.mask, weights, &g, inv);
    net.backward(pass, g, grad);
  }
  return total * inv;
}

LabelImage argmax_labels(const ProbMap& p) {
  LabelImage out(p.h, p.w);
  const int n = p.plane();
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bv = p.data[static_cast<std::size_t>(i)];
    for (int c = 1; c < p.c; ++c) {
      const double v = p.data[static_cast<std::size_t>(c) * n + i];
      if (v > bv) {
        bv = v;
        best = c;
      }
    }
    out.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(best);
  }
  return out;
}

}  // namespace chase
