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

#include "core/ada.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "core/consistency.hpp"
#include "core/error.hpp"

namespace chase {

Discriminator::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  if (cfg_.width < 1) throw ConfigError("discriminator width must be >= 1");
  nn::ParamLayout layout;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    branches_[i] = nn::Conv2d::make(layout, 1, cfg_.width, 3, cfg_.dilations[i]);
  }
  head_ = nn::Conv2d::make(layout, cfg_.width, 1, 1);
  params_.assign(layout.size, 0.0);
}

void Discriminator::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& b : branches_) b.init(params_, rng);
  head_.init(params_, rng);
}

Discriminator::Pass Discriminator::forward_one(const Tensor& region) const {
  CHASE_REQUIRE(region.c == 1, "discriminator expects a one-channel region map");
  Pass p;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Tensor b = branches_[i].forward(params_, region, &p.branch[i]);
    if (i == 0) p.hidden = std::move(b);
    else p.hidden += b;
  }
  nn::leaky_relu(p.hidden, cfg_.negative_slope);
  Tensor logit = head_.forward(params_, p.hidden, &p.head);
  p.prob = Tensor(1, logit.h, logit.w);
  for (std::size_t k = 0; k < logit.size(); ++k) p.prob.data[k] = nn::sigmoid(logit.data[k]);
  return p;
}

std::vector<Discriminator::Pass> Discriminator::forward(std::span<const Tensor> regions,
                                                        Domain domain) const {
  if (domain == Domain::Source) ++source_calls_;
  else ++target_calls_;
  std::vector<Pass> out;
  out.reserve(regions.size());
  for (const Tensor& r : regions) out.push_back(forward_one(r));
  return out;
}

Tensor Discriminator::backward(const Pass& p, const Tensor& dlogit, std::span<double> grad,
                               bool need_dx) const {
  std::vector<double> scratch;
  std::span<double> g = grad;
  if (g.empty()) {
    scratch.assign(params_.size(), 0.0);
    g = scratch;
  }
  Tensor dh = head_.backward(params_, p.head, dlogit, g, true);
  nn::leaky_relu_backward(p.hidden, dh, cfg_.negative_slope);
  Tensor dx;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    Tensor d = branches_[i].backward(params_, p.branch[i], dh, g, need_dx);
    if (need_dx) accumulate(dx, d);
  }
  return dx;
}

Tensor liver_region_map(const ProbMap& pred) {
  CHASE_REQUIRE(pred.c == kNumClasses, "region map expects a 3-class prediction");
  Tensor r(1, pred.h, pred.w);
  const int n = pred.plane();
  for (int i = 0; i < n; ++i) {
    r.data[static_cast<std::size_t>(i)] =
        pred.data[static_cast<std::size_t>(n) + i] + pred.data[2 * static_cast<std::size_t>(n) + i];
  }
  return r;
}

void liver_region_backward(const Tensor& dregion, Tensor& dpred, double scale) {
  if (dpred.empty()) dpred = Tensor(kNumClasses, dregion.h, dregion.w);
  const int n = dregion.plane();
  for (int i = 0; i < n; ++i) {
    const double g = scale * dregion.data[static_cast<std::size_t>(i)];
    dpred.data[static_cast<std::size_t>(n) + i] += g;
    dpred.data[2 * static_cast<std::size_t>(n) + i] += g;
  }
}

double bce_map(const Tensor& prob, double label, Tensor* dlogit, double scale) {
  const double n = static_cast<double>(prob.size());
  double loss = 0.0;
  if (dlogit && dlogit->empty()) *dlogit = Tensor(prob.c, prob.h, prob.w);
  for (std::size_t k = 0; k < prob.size(); ++k) {
    const double p = std::clamp(prob.data[k], kProbEps, 1.0 - kProbEps);
    loss -= label * std::log(p) + (1.0 - label) * std::log(1.0 - p);
    if (dlogit) dlogit->data[k] += scale * (prob.data[k] - label) / n;
  }
  return loss / n;
}

DiscriminatorLossResult discriminator_loss(const Discriminator& d,
                                           std::span<const Discriminator::Pass> source,
                                           std::span<const Discriminator::Pass> target,
                                           std::span<double> dgrad) {
  CHASE_REQUIRE(!source.empty() && !target.empty(), "discriminator loss needs both domains");
  DiscriminatorLossResult r;
  auto side = [&](std::span<const Discriminator::Pass> passes, double label) {
    const double inv = 1.0 / static_cast<double>(passes.size());
    double s = 0.0;
    for (const auto& p : passes) {
      Tensor dl;
      s += bce_map(p.prob, label, dgrad.empty() ? nullptr : &dl, inv);
      if (!dgrad.empty()) d.backward(p, dl, dgrad, false);
    }
    return s * inv;
  };
  r.source_term = side(source, 1.0);
  r.target_term = side(target, 0.0);
  r.loss = r.source_term + r.target_term;
  return r;
}

double adversarial_loss(const Discriminator& d, std::span<const Discriminator::Pass> target,
                        std::vector<Tensor>* dregions) {
  CHASE_REQUIRE(!target.empty(), "adversarial loss needs a target batch");
  const double inv = 1.0 / static_cast<double>(target.size());
  double s = 0.0;
  if (dregions) dregions->assign(target.size(), Tensor{});
  for (std::size_t i = 0; i < target.size(); ++i) {
    Tensor dl;
    s += bce_map(target[i].prob, 1.0, dregions ? &dl : nullptr, inv);
    if (dregions) (*dregions)[i] = d.backward(target[i], dl, {}, true);
  }
  return s * inv;
}

}  // namespace chase
