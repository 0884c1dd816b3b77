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

#pragma once

#include <span>
#include <vector>

namespace chase {

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.99, double eps = 1e-8)
      : lr(lr), beta1(beta1), beta2(beta2), eps(eps) {}

  void step(std::span<double> params, std::span<const double> grad);
  long steps() const noexcept { return t_; }

  double lr;
  double beta1;
  double beta2;
  double eps;

 private:
  std::vector<double> m_, v_;
  long t_ = 0;
};

class SgdMomentum {
 public:
  explicit SgdMomentum(double lr, double momentum = 0.9) : lr(lr), momentum(momentum) {}

  void step(std::span<double> params, std::span<const double> grad);

  double lr;
  double momentum;

 private:
  std::vector<double> buf_;
};

/// Multiplies the learning rate by `factor` once the tracked metric has not
/// improved for more than `patience` consecutive checks.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience = 10, double factor = 0.1, bool maximize = true)
      : patience_(patience), factor_(factor), maximize_(maximize) {}

  /// Returns true when `lr` was reduced.
  bool observe(double metric, double& lr);
  double best() const noexcept { return best_; }

 private:
  int patience_;
  double factor_;
  bool maximize_;
  bool has_best_ = false;
  double best_ = 0.0;
  int bad_ = 0;
};

/// base * (1 - progress)^power, progress clamped to [0, 1].
double poly_lr(double base, double progress, double power = 0.9);

}  // namespace chase
