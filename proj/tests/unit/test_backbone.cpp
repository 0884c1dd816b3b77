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
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "core/backbone.hpp"
#include "helpers.hpp"

using namespace chase;
using namespace chase::test;

namespace {

// Independent weighted cross-entropy: plain loop over pixels.
double ce_oracle(const ProbMap& p, const LabelImage& y, const std::array<double, 3>& w,
                 int only_class = -1) {
  double s = 0.0;
  int valid = 0;
  for (int i = 0; i < p.plane(); ++i) {
    const int lab = y.data[static_cast<std::size_t>(i)];
    if (lab == kIgnore) continue;
    ++valid;
    if (only_class >= 0 && lab != only_class) continue;
    s += -w[static_cast<std::size_t>(lab)] * std::log(p.channel(lab)[static_cast<std::size_t>(i)]);
  }
  return valid ? s / valid : 0.0;
}

StageOutputs constant_outputs(int h, int w, std::array<double, 3> probs) {
  StageOutputs o;
  for (int m = 0; m < kNumStages; ++m) {
    o.probs[m] = ProbMap(kNumClasses, h, w);
    for (int c = 0; c < kNumClasses; ++c) {
      for (double& v : o.probs[m].channel(c)) v = probs[static_cast<std::size_t>(c)];
    }
  }
  return o;
}

}  // namespace

TEST_CASE("zero score heads give uniform predictions at every stage") {
  PhnnNet net(tiny_backbone());
  net.init(1);
  net.zero_heads();
  std::mt19937_64 rng(2);
  const StageOutputs o = net.forward(random_image(8, 8, rng));
  for (int m = 0; m < kNumStages; ++m) {
    for (double v : o.probs[m].data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
}

TEST_CASE("stage probabilities are normalised and input-sized") {
  PhnnNet net(BackboneConfig{});
  net.init(3);
  std::mt19937_64 rng(4);
  const StageOutputs o = net.forward(random_image(32, 32, rng));
  for (int m = 0; m < kNumStages; ++m) {
    REQUIRE(o.probs[m].h == 32);
    REQUIRE(o.probs[m].w == 32);
    for (int i = 0; i < o.probs[m].plane(); ++i) {
      double s = 0.0;
      for (int c = 0; c < kNumClasses; ++c) s += o.probs[m].channel(c)[static_cast<std::size_t>(i)];
      CHECK(std::abs(s - 1.0) <= 1e-5);
    }
  }
}

TEST_CASE("a zero stage-2 score leaves the running accumulator unchanged") {
  PhnnNet net(tiny_backbone());
  net.init(5);
  net.zero_heads();
  net.params()[net.stem().head1.bias_offset() + 1] = 10.0;
  std::mt19937_64 rng(6);
  const StageOutputs o = net.forward(random_image(8, 8, rng));
  const double e10 = std::exp(10.0);
  for (int i = 0; i < 64; ++i) {
    CHECK(o.probs[0].channel(1)[static_cast<std::size_t>(i)] == doctest::Approx(e10 / (e10 + 2.0)).epsilon(1e-12));
    for (int c = 0; c < kNumClasses; ++c) {
      CHECK(o.probs[1].channel(c)[static_cast<std::size_t>(i)] ==
            doctest::Approx(o.probs[0].channel(c)[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("mismatched input shape is a contract error") {
  PhnnNet net(tiny_backbone());
  net.init(1);
  CHECK_THROWS_AS(net.forward(Tensor(1, 16, 16)), ContractError);
}

TEST_CASE("staged loss closed forms") {
  LabelImage y(4, 4);
  for (int i = 0; i < 16; ++i) y.data[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(i % 3);
  SUBCASE("perfect one-hot predictions give zero") {
    StageOutputs o = constant_outputs(4, 4, {0, 0, 0});
    for (int m = 0; m < kNumStages; ++m) {
      for (int i = 0; i < 16; ++i) o.probs[m].channel(y.data[static_cast<std::size_t>(i)])[static_cast<std::size_t>(i)] = 1.0;
    }
    CHECK(staged_seg_loss(o, y, ClassWeights{}) == 0.0);
  }
  SUBCASE("uniform predictions with unit weights give 3 ln 3") {
    const StageOutputs o = constant_outputs(4, 4, {1.0 / 3, 1.0 / 3, 1.0 / 3});
    CHECK(staged_seg_loss(o, y, ClassWeights{}) == doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-12));
    CHECK(3.0 * std::log(3.0) == doctest::Approx(3.296).epsilon(1e-4));
  }
  SUBCASE("doubling the lesion weight doubles the lesion contribution") {
    std::mt19937_64 rng(7);
    StageOutputs o;
    for (auto& p : o.probs) p = random_probs(4, 4, rng);
    ClassWeights w1, w2;
    w2.w[2] = 2.0;
    double lesion_part = 0.0;
    for (int m = 0; m < kNumStages; ++m) lesion_part += (m + 1) / 5.0 * ce_oracle(o.probs[m], y, {1, 1, 1}, 2);
    CHECK(staged_seg_loss(o, y, w2) - staged_seg_loss(o, y, w1) == doctest::Approx(lesion_part).epsilon(1e-12));
  }
  SUBCASE("ignored pixels contribute nothing and all-ignore is zero") {
    std::mt19937_64 rng(8);
    StageOutputs o;
    for (auto& p : o.probs) p = random_probs(4, 4, rng);
    LabelImage yi = y;
    yi.data[3] = kIgnore;
    yi.data[9] = kIgnore;
    double expect = 0.0;
    for (int m = 0; m < kNumStages; ++m) expect += (m + 1) / 5.0 * ce_oracle(o.probs[m], yi, {1, 1, 1});
    CHECK(staged_seg_loss(o, yi, ClassWeights{}) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(staged_seg_loss(o, LabelImage(4, 4, kIgnore), ClassWeights{}) == 0.0);
  }
}

TEST_CASE("unit weights reproduce the unweighted cross-entropy exactly") {
  std::mt19937_64 rng(9);
  const ProbMap p = random_probs(6, 5, rng);
  const LabelImage y = random_labels(6, 5, rng);
  double s = 0.0;
  for (int i = 0; i < p.plane(); ++i) s -= std::log(p.channel(y.data[static_cast<std::size_t>(i)])[static_cast<std::size_t>(i)]);
  CHECK(cross_entropy(p, y, ClassWeights{}) == s / p.plane());
}

TEST_CASE("removing the stage-5 score changes the loss by the recomputed final term") {
  PhnnNet net(tiny_backbone());
  net.init(10);
  jitter(net.params(), 11);
  std::mt19937_64 rng(12);
  const Tensor img = random_image(8, 8, rng);
  const LabelImage y = random_labels(8, 8, rng);
  ClassWeights w;
  w.w = {0.5, 1.0, 1.5};
  const StageOutputs before = net.forward(img);
  const double l_before = staged_seg_loss(before, y, w);
  net.trunk().heads[2].zero(net.params());
  const StageOutputs after = net.forward(img);
  const double l_after = staged_seg_loss(after, y, w);
  const std::array<double, 3> wa = w.w;
  // With a zero head, stage 5 repeats stage 4.
  CHECK(l_before - l_after ==
        doctest::Approx(ce_oracle(before.probs[4], y, wa) - ce_oracle(before.probs[3], y, wa)).epsilon(1e-10));
}

TEST_CASE("supervised loss is the batch mean") {
  PhnnNet net(tiny_backbone());
  net.init(13);
  jitter(net.params(), 14);
  std::mt19937_64 rng(15);
  const LabeledSlice a{random_image(8, 8, rng), random_labels(8, 8, rng)};
  const LabeledSlice b{random_image(8, 8, rng), random_labels(8, 8, rng)};
  const ClassWeights w;
  const double la = staged_seg_loss(net.forward(a.image), a.mask, w);
  const double lb = staged_seg_loss(net.forward(b.image), b.mask, w);
  const std::vector<LabeledSlice> one{a}, dup{a, a}, two{a, b};
  CHECK(supervised_loss(net, one, w) == doctest::Approx(la).epsilon(1e-14));
  CHECK(supervised_loss(net, dup, w) == doctest::Approx(la).epsilon(1e-14));
  CHECK(supervised_loss(net, two, w) == doctest::Approx(0.5 * (la + lb)).epsilon(1e-14));
  CHECK_THROWS_AS(supervised_loss(net, std::vector<LabeledSlice>{}, w), ContractError);
}

TEST_CASE("staged loss gradient matches central differences") {
  PhnnNet net(tiny_backbone());
  net.init(16);
  jitter(net.params(), 17);
  REQUIRE(net.params().size() <= 5000);
  std::mt19937_64 rng(18);
  const std::vector<LabeledSlice> batch{{random_image(8, 8, rng), random_labels(8, 8, rng)},
                                        {random_image(8, 8, rng), random_labels(8, 8, rng)}};
  ClassWeights w;
  w.w = {0.4, 1.1, 1.5};
  std::vector<double> grad(net.params().size(), 0.0);
  supervised_loss(net, batch, w, grad);
  const GradCheck r = check_gradient(net.params(), grad, [&] { return supervised_loss(net, batch, w); });
  CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("prevalence weights are inverse frequencies with mean one") {
  Study s;
  s.id = "s";
  LabelMask m;
  m.labels = Grid3<std::uint8_t>(1, 1, 10, kBackground);
  for (int x = 6; x < 9; ++x) m.labels(0, 0, x) = kLiver;
  m.labels(0, 0, 9) = kLesion;
  s.mask = m;
  const std::vector<Study> studies{s};
  const ClassWeights w = prevalence_weights(studies);
  CHECK((w.w[0] + w.w[1] + w.w[2]) / 3.0 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.w[1] / w.w[0] == doctest::Approx(6.0 / 3.0).epsilon(1e-12));
  CHECK(w.w[2] / w.w[0] == doctest::Approx(6.0).epsilon(1e-12));
}
