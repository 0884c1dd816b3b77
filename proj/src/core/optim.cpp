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

#include "core/optim.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace chase {

void Adam::step(std::span<double> params, std::span<const double> grad) {
  CHASE_REQUIRE(params.size() == grad.size(), "adam: gradient size mismatch");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
    t_ = 0;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
    v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
  }
}

void SgdMomentum::step(std::span<double> params, std::span<const double> grad) {
  CHASE_REQUIRE(params.size() == grad.size(), "sgd: gradient size mismatch");
  if (buf_.size() != params.size()) buf_.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    buf_[i] = momentum * buf_[i] + grad[i];
    params[i] -= lr * buf_[i];
  }
}

bool PlateauScheduler::observe(double metric, double& lr) {
  const bool better = !has_best_ || (maximize_ ? metric > best_ : metric < best_);
  if (better) {
    has_best_ = true;
    best_ = metric;
    bad_ = 0;
    return false;
  }
  if (++bad_ > patience_) {
    lr *= factor_;
    bad_ = 0;
    return true;
  }
  return false;
}

double poly_lr(double base, double progress, double power) {
  const double t = std::clamp(progress, 0.0, 1.0);
  return base * std::pow(1.0 - t, power);
}

}  // namespace chase
