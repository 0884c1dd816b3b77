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

#include <algorithm>
#include <numeric>

#include "core/consistency.hpp"
#include "helpers.hpp"

using namespace chase;
using namespace chase::test;

namespace {

ProbMap one_hot_pixel(int cls) {
  ProbMap p(3, 1, 1);
  p.data[static_cast<std::size_t>(cls)] = 1.0;
  return p;
}

std::vector<const ProbMap*> ptrs(const std::vector<ProbMap>& v) {
  std::vector<const ProbMap*> out;
  for (const auto& p : v) out.push_back(&p);
  return out;
}

}  // namespace

TEST_CASE("consensus is the per-pixel mean") {
  const ProbMap a = one_hot_pixel(0), b = one_hot_pixel(1);
  const ProbMap* one[] = {&a};
  CHECK(consensus(one).data == a.data);
  const ProbMap* two[] = {&a, &b};
  CHECK(consensus(two).data == std::vector<double>{0.5, 0.5, 0.0});
  std::mt19937_64 rng(1);
  const std::vector<ProbMap> set{random_probs(4, 4, rng), random_probs(4, 4, rng), random_probs(4, 4, rng)};
  std::vector<ProbMap> doubled = set;
  doubled.insert(doubled.end(), set.begin(), set.end());
  const ProbMap m1 = consensus(ptrs(set)), m2 = consensus(ptrs(doubled));
  for (std::size_t i = 0; i < m1.size(); ++i) CHECK(m2.data[i] == doctest::Approx(m1.data[i]).epsilon(1e-15));
  CHECK_THROWS_AS(consensus(std::vector<const ProbMap*>{}), ContractError);
}

TEST_CASE("pixel KL closed forms") {
  CHECK(kl_pixel({0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}) == 0.0);
  CHECK(kl_pixel({1, 0, 0}, {0.5, 0.25, 0.25}) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const ProbMap p = random_probs(1, 1, rng), q = random_probs(1, 1, rng);
    CHECK(kl_pixel({p.data[0], p.data[1], p.data[2]}, {q.data[0], q.data[1], q.data[2]}) >= 0.0);
  }
}

TEST_CASE("JSD closed forms and symmetry") {
  std::mt19937_64 rng(3);
  const ProbMap p = random_probs(5, 5, rng);
  const ProbMap* same[] = {&p, &p, &p};
  CHECK(jsd_loss(same) <= 1e-9);

  const ProbMap a = one_hot_pixel(0), b = one_hot_pixel(1);
  const ProbMap* dis[] = {&a, &b};
  CHECK(jsd_loss(dis) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  std::vector<ProbMap> set;
  for (int i = 0; i < 4; ++i) set.push_back(random_probs(6, 6, rng));
  const double base = jsd_loss(ptrs(set));
  std::vector<int> order{0, 1, 2, 3};
  while (std::next_permutation(order.begin(), order.end())) {
    std::vector<const ProbMap*> perm;
    for (int k : order) perm.push_back(&set[static_cast<std::size_t>(k)]);
    CHECK(jsd_loss(perm) == base);
  }
}

TEST_CASE("consistency loss over a batch") {
  CoHeteroNet net(tiny_backbone());
  net.init(4);
  jitter(net.params(), 5);
  std::mt19937_64 rng(6);
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  const std::vector<PhaseId> v_only{PhaseId::V};

  SUBCASE("one phase and one combo per study gives zero") {
    std::vector<UnlabeledSlice> batch(2);
    for (auto& s : batch) {
      s.images = random_phase_images(v_only, 8, 8, rng);
      s.combos = {ViewCombo::of({PhaseId::V})};
    }
    CHECK(cons_loss_batch(net, batch) == 0.0);
  }
  SUBCASE("mean of per-item JSD") {
    std::vector<UnlabeledSlice> batch(2);
    std::vector<double> per_item;
    for (auto& s : batch) {
      s.images = random_phase_images(all, 8, 8, rng);
      s.combos = {ViewCombo::parse("NC"), ViewCombo::parse("A+V"), ViewCombo::parse("NC+A+V+D")};
      std::vector<ProbMap> finals;
      for (const auto& c : s.combos) finals.push_back(net.forward(s.images, c).final());
      per_item.push_back(jsd_loss(ptrs(finals)));
    }
    CHECK(cons_loss_batch(net, std::span(batch).first(1)) == doctest::Approx(per_item[0]).epsilon(1e-14));
    CHECK(cons_loss_batch(net, batch) == doctest::Approx(0.5 * (per_item[0] + per_item[1])).epsilon(1e-14));
    CHECK_THROWS_AS(cons_loss_batch(net, std::vector<UnlabeledSlice>{}), ContractError);
  }
  SUBCASE("singleton views reduce to per-phase co-training") {
    UnlabeledSlice s;
    s.images = random_phase_images(all, 8, 8, rng);
    std::vector<ProbMap> per_phase;
    for (PhaseId p : kAllPhases) {
      s.combos.push_back(ViewCombo::of({p}));
      per_phase.push_back(net.forward(s.images, s.combos.back()).final());
    }
    const std::vector<UnlabeledSlice> batch{s};
    CHECK(cons_loss_batch(net, batch) == jsd_loss(ptrs(per_phase)));
  }
}

TEST_CASE("consistency gradient matches central differences") {
  CoHeteroNet net(tiny_backbone());
  net.init(7);
  jitter(net.params(), 8);
  REQUIRE(net.params().size() <= 5000);
  std::mt19937_64 rng(9);
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  const std::vector<PhaseId> two{PhaseId::A, PhaseId::V};
  std::vector<UnlabeledSlice> batch(2);
  batch[0].images = random_phase_images(all, 8, 8, rng);
  batch[0].combos = {ViewCombo::parse("NC"), ViewCombo::parse("A+V"), ViewCombo::parse("V+D"),
                     ViewCombo::parse("NC+A+V+D")};
  batch[1].images = random_phase_images(two, 8, 8, rng);
  batch[1].combos = {ViewCombo::parse("A"), ViewCombo::parse("V"), ViewCombo::parse("A+V")};
  std::vector<double> grad(net.params().size(), 0.0);
  const double value = cons_loss_batch(net, batch, grad);
  CHECK(value > 0.0);
  const GradCheck r = check_gradient(net.params(), grad, [&] { return cons_loss_batch(net, batch); });
  CHECK(r.max_rel <= 1e-4);

  std::vector<double> detached(net.params().size(), 0.0);
  CHECK(cons_loss_batch(net, batch, detached, true) == value);
  CHECK_FALSE(detached == grad);
}
