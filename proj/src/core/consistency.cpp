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

#include "core/consistency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "core/error.hpp"

namespace chase {

namespace {

constexpr double kTiny = std::numeric_limits<double>::min();

void check_set(std::span<const ProbMap* const> preds) {
  CHASE_REQUIRE(!preds.empty(), "prediction set is empty");
  for (const ProbMap* p : preds) {
    CHASE_REQUIRE(p->c == kNumClasses && p->same_shape(*preds[0]), "prediction shapes differ");
  }
}

// Sum of a small set in ascending order, so the result does not depend on
// the order in which the set was listed.
double ordered_sum(std::span<double> values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

ProbMap consensus(std::span<const ProbMap* const> preds) {
  check_set(preds);
  const std::size_t nv = preds.size();
  ProbMap m(preds[0]->c, preds[0]->h, preds[0]->w);
  std::vector<double> vals(nv);
  for (std::size_t k = 0; k < m.size(); ++k) {
    for (std::size_t v = 0; v < nv; ++v) vals[v] = preds[v]->data[k];
    m.data[k] = ordered_sum(vals) / static_cast<double>(nv);
  }
  return m;
}

double kl_pixel(const std::array<double, kNumClasses>& p, const std::array<double, kNumClasses>& q) {
  double kl = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    if (p[c] <= 0.0) continue;
    kl += p[c] * (std::log(p[c]) - std::log(std::max(q[c], kProbEps)));
  }
  return kl;
}

double jsd_loss(std::span<const ProbMap* const> preds, std::vector<Tensor>* dpreds, double scale,
                bool detach_consensus) {
  check_set(preds);
  const ProbMap m = consensus(preds);
  const int n = m.plane();
  const std::size_t nv = preds.size();
  const double norm = 1.0 / (static_cast<double>(nv) * n);

  std::vector<double> per_view;
  for (const ProbMap* p : preds) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      std::array<double, kNumClasses> pp{}, qq{};
      for (int c = 0; c < kNumClasses; ++c) {
        pp[c] = p->data[static_cast<std::size_t>(c) * n + i];
        qq[c] = m.data[static_cast<std::size_t>(c) * n + i];
      }
      total += kl_pixel(pp, qq);
    }
    per_view.push_back(total);
  }
  if (dpreds) {
    if (dpreds->size() < nv) dpreds->resize(nv);
    // d/dM_c of sum_v KL(P_v || M) = -sum_v P_v,c / M_c (zero where clamped).
    std::vector<double> dm;
    if (!detach_consensus) {
      dm.assign(m.size(), 0.0);
      for (const ProbMap* p : preds) {
        for (std::size_t k = 0; k < m.size(); ++k) {
          if (m.data[k] > kProbEps) dm[k] -= p->data[k] / m.data[k];
        }
      }
    }
    for (std::size_t v = 0; v < nv; ++v) {
      Tensor& d = (*dpreds)[v];
      if (d.empty()) d = Tensor(m.c, m.h, m.w);
      const ProbMap& p = *preds[v];
      for (std::size_t k = 0; k < m.size(); ++k) {
        double g = 0.0;
        if (p.data[k] > 0.0) {
          g = std::log(std::max(p.data[k], kTiny)) + 1.0 - std::log(std::max(m.data[k], kProbEps));
        }
        if (!detach_consensus) g += dm[k] / static_cast<double>(nv);
        d.data[k] += scale * norm * g;
      }
    }
  }
  return ordered_sum(per_view) * norm;
}

double cons_loss_batch(const CoHeteroNet& net, std::span<const UnlabeledSlice> batch,
                       std::span<double> grad, bool detach_consensus) {
  CHASE_REQUIRE(!batch.empty(), "consistency loss needs a non-empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const UnlabeledSlice& item : batch) {
    if (item.combos.size() < 2) continue;
    const CoHeteroNet::Pass pass = net.forward_views(item.images, item.combos);
    std::vector<const ProbMap*> finals;
    for (const auto& v : pass.views) finals.push_back(&v.out.final());
    if (grad.empty()) {
      total += jsd_loss(finals);
      continue;
    }
    std::vector<Tensor> dfinal;
    total += jsd_loss(finals, &dfinal, inv, detach_consensus);
    std::vector<StageGrads> g(pass.views.size());
    for (std::size_t v = 0; v < g.size(); ++v) g[v].dprobs[kNumStages - 1] = std::move(dfinal[v]);
    net.backward_views(pass, g, grad);
  }
  return total * inv;
}

}  // namespace chase
