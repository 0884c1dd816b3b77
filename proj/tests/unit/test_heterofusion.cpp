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

#include <set>

#include "core/heterofusion.hpp"
#include "core/trainer.hpp"
#include "helpers.hpp"

using namespace chase;
using namespace chase::test;

namespace {

std::vector<PhaseId> phases_from_bits(unsigned bits) { return ViewCombo::from_bits(bits).phases; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace

TEST_CASE("view enumeration sizes") {
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  CHECK(enumerate_views(all).size() == 15);
  const std::vector<PhaseId> v{PhaseId::V};
  const auto single = enumerate_views(v);
  REQUIRE(single.size() == 1);
  CHECK(single[0] == ViewCombo::of({PhaseId::V}));
  const std::vector<PhaseId> three{PhaseId::NC, PhaseId::A, PhaseId::V};
  CHECK(enumerate_views(three).size() == 7);
  for (unsigned bits = 1; bits <= 15; ++bits) {
    const auto avail = phases_from_bits(bits);
    const auto views = enumerate_views(avail);
    CHECK(views.size() == (1u << avail.size()) - 1);
    std::set<unsigned> seen;
    for (const ViewCombo& c : views) {
      CHECK(seen.insert(c.bits()).second);
      CHECK((c.bits() & bits) == c.bits());
      CHECK(std::is_sorted(c.phases.begin(), c.phases.end()));
    }
  }
  CHECK_THROWS_AS(enumerate_views(std::vector<PhaseId>{}), ContractError);
}

TEST_CASE("view combos are canonical") {
  CHECK(ViewCombo::parse("V+A") == ViewCombo::parse("A+V"));
  CHECK(ViewCombo::parse("nc+d").name() == "NC+D");
  CHECK_THROWS_AS(ViewCombo::of({PhaseId::A, PhaseId::A}), ContractError);
  CHECK_THROWS_AS(ViewCombo::of({}), ContractError);
}

TEST_CASE("feature fusion is mean and population variance") {
  std::mt19937_64 rng(1);
  Tensor f(3, 4, 4);
  for (double& v : f.data) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  SUBCASE("single phase gives (F, 0)") {
    const Tensor* one[] = {&f};
    const Tensor out = fuse_features(one);
    REQUIRE(out.c == 6);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.data[i] == f.data[i]);
    for (std::size_t i = f.size(); i < out.size(); ++i) CHECK(out.data[i] == 0.0);
  }
  SUBCASE("two identical maps give (F, 0)") {
    const Tensor* two[] = {&f, &f};
    const Tensor out = fuse_features(two);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(out.data[i] == doctest::Approx(f.data[i]).epsilon(1e-15));
    for (std::size_t i = f.size(); i < out.size(); ++i) CHECK(out.data[i] == 0.0);
  }
  SUBCASE("values 1 and 3 give mean 2 and variance 1") {
    const Tensor a(1, 1, 1, 1.0), b(1, 1, 1, 3.0);
    const Tensor* two[] = {&a, &b};
    const Tensor out = fuse_features(two);
    CHECK(out.data[0] == 2.0);
    CHECK(out.data[1] == 1.0);
  }
  SUBCASE("shape mismatch is rejected") {
    const Tensor g(2, 4, 4);
    const Tensor* two[] = {&f, &g};
    CHECK_THROWS_AS(fuse_features(two), ContractError);
  }
}

TEST_CASE("intermediate prediction fusion is the arithmetic mean") {
  ProbMap a(3, 1, 1), b(3, 1, 1);
  a.data = {1, 0, 0};
  b.data = {0, 1, 0};
  const ProbMap* one[] = {&a};
  CHECK(fuse_intermediate_predictions(one).data == a.data);
  const ProbMap* two[] = {&a, &b};
  CHECK(fuse_intermediate_predictions(two).data == std::vector<double>{0.5, 0.5, 0.0});
  std::mt19937_64 rng(2);
  const ProbMap p = random_probs(5, 5, rng), q = random_probs(5, 5, rng), r = random_probs(5, 5, rng);
  const ProbMap* three[] = {&p, &q, &r};
  const ProbMap m = fuse_intermediate_predictions(three);
  for (int i = 0; i < m.plane(); ++i) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) s += m.channel(c)[static_cast<std::size_t>(i)];
    CHECK(std::abs(s - 1.0) <= 1e-6);
  }
}

TEST_CASE("singleton V view reproduces the pretrained network") {
  for (const BackboneConfig& bc : {tiny_backbone(), BackboneConfig{}}) {
    PhnnNet pre(bc);
    pre.init(3);
    jitter(pre.params(), 4, 0.05);
    RunConfig cfg;
    cfg.backbone = bc;
    cfg.synth.height = bc.height;
    cfg.synth.width = bc.width;
    const CoHeteroModels m = init_cohetero_from_pretrained(pre, cfg);
    std::mt19937_64 rng(5);
    const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
    const PhaseImages imgs = random_phase_images(all, bc.height, bc.width, rng);
    const StageOutputs a = pre.forward(*imgs[static_cast<std::size_t>(index_of(PhaseId::V))]);
    const StageOutputs b = m.net.forward(imgs, ViewCombo::of({PhaseId::V}));
    for (int s = 0; s < kNumStages; ++s) CHECK(max_abs_diff(a.probs[s], b.probs[s]) <= 1e-6);
  }
}

TEST_CASE("listing order of a view does not change the output") {
  CoHeteroNet net(tiny_backbone());
  net.init(6);
  jitter(net.params(), 7);
  std::mt19937_64 rng(8);
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  const PhaseImages imgs = random_phase_images(all, 8, 8, rng);
  const StageOutputs a = net.forward(imgs, ViewCombo{{PhaseId::A, PhaseId::V}});
  const StageOutputs b = net.forward(imgs, ViewCombo{{PhaseId::V, PhaseId::A}});
  const StageOutputs c = net.forward(imgs, ViewCombo{{PhaseId::D, PhaseId::NC, PhaseId::V}});
  const StageOutputs d = net.forward(imgs, ViewCombo{{PhaseId::NC, PhaseId::V, PhaseId::D}});
  for (int s = 0; s < kNumStages; ++s) {
    CHECK(a.probs[s].data == b.probs[s].data);
    CHECK(c.probs[s].data == d.probs[s].data);
  }
}

TEST_CASE("four identical phases with identical stems equal the single-phase view") {
  CoHeteroNet net(tiny_backbone());
  net.init(9);
  jitter(net.params(), 10);
  auto& p = net.params();
  const Stem& nc = net.stem(PhaseId::NC);
  for (PhaseId ph : {PhaseId::A, PhaseId::V, PhaseId::D}) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(nc.begin), p.begin() + static_cast<std::ptrdiff_t>(nc.end),
              p.begin() + static_cast<std::ptrdiff_t>(net.stem(ph).begin));
  }
  std::mt19937_64 rng(11);
  const Tensor img = random_image(8, 8, rng);
  PhaseImages imgs;
  for (auto& slot : imgs) slot = img;
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  const StageOutputs full = net.forward(imgs, ViewCombo::of(all));
  const StageOutputs single = net.forward(imgs, ViewCombo::of({PhaseId::NC}));
  for (int s = 0; s < kNumStages; ++s) CHECK(max_abs_diff(full.probs[s], single.probs[s]) <= 1e-12);
}

TEST_CASE("a view requesting a missing phase is a contract error") {
  CoHeteroNet net(tiny_backbone());
  net.init(12);
  std::mt19937_64 rng(13);
  const std::vector<PhaseId> av{PhaseId::V, PhaseId::D};
  const PhaseImages imgs = random_phase_images(av, 8, 8, rng);
  CHECK_NOTHROW(net.forward(imgs, ViewCombo::of({PhaseId::V, PhaseId::D})));
  CHECK_THROWS_AS(net.forward(imgs, ViewCombo::of({PhaseId::A, PhaseId::V})), ContractError);
}

TEST_CASE("stems are structurally identical and the trunk input is doubled") {
  CoHeteroNet net(tiny_backbone());
  for (PhaseId p : kAllPhases) {
    CHECK(net.stem(p).end - net.stem(p).begin == net.stem(PhaseId::NC).end - net.stem(PhaseId::NC).begin);
  }
  CHECK(net.trunk().stages[0].convs[0].in == 2 * tiny_backbone().channels[1]);
}
