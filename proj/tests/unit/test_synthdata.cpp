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
#include <random>
#include <set>

#include "core/synthdata.hpp"

using namespace chase;

namespace {

SynthConfig small_config() {
  SynthConfig c;
  c.source_train = 4;
  c.source_val = 2;
  c.source_test = 2;
  c.target_unlabeled = 6;
  c.target_val = 2;
  c.target_test = 3;
  return c;
}

double region_fraction(const LabelMask& m) {
  std::size_t n = 0;
  for (auto v : m.labels.data) n += (v == kLiver || v == kLesion);
  return static_cast<double>(n) / static_cast<double>(m.labels.size());
}

}  // namespace

TEST_CASE("generate_study is a pure function of seed, domain and index") {
  SynthConfig c;
  const GeneratedStudy a = generate_study(c, Domain::Source, 0);
  const GeneratedStudy b = generate_study(c, Domain::Source, 0);
  CHECK(a.study.id == b.study.id);
  CHECK(a.study.phases == b.study.phases);
  CHECK(a.truth == b.truth);
  const GeneratedStudy t1 = generate_study(c, Domain::Target, 3);
  const GeneratedStudy t2 = generate_study(c, Domain::Target, 3);
  CHECK(t1.study.phases == t2.study.phases);
  CHECK(t1.truth == t2.truth);
  c.seed = 8;
  CHECK_FALSE(generate_study(c, Domain::Source, 0).study.phases == a.study.phases);
}

TEST_CASE("source studies carry only V with a full mask") {
  SynthConfig c;
  for (int i = 0; i < 6; ++i) {
    const GeneratedStudy g = generate_study(c, Domain::Source, i);
    REQUIRE(g.study.phases.size() == 1);
    CHECK(g.study.phases.count(PhaseId::V) == 1);
    CHECK_FALSE(g.study.tace);
    CHECK(g.truth.labels.data.end() ==
          std::find(g.truth.labels.data.begin(), g.truth.labels.data.end(), kIgnore));
    g.study.validate();
    g.truth.check_values();
  }
}

TEST_CASE("target studies expose no mask and share one shape across phases") {
  SynthConfig c;
  for (int i = 0; i < c.target_unlabeled; i += 17) {
    const GeneratedStudy g = generate_study(c, Domain::Target, i);
    CHECK_FALSE(g.study.mask.has_value());
    CHECK_FALSE(g.study.phases.empty());
    g.study.validate();
  }
}

TEST_CASE("missing-phase probability zero gives all four phases") {
  SynthConfig c;
  c.missing_phase_prob = 0.0;
  for (int i = 0; i < 20; ++i) {
    CHECK(generate_study(c, Domain::Target, i).study.phases.size() == 4);
  }
}

TEST_CASE("fraction of studies with missing phases tracks the configured probability") {
  SynthConfig c;
  c.target_unlabeled = 200;
  int missing = 0;
  for (int i = 0; i < 200; ++i) missing += generate_study(c, Domain::Target, i).study.phases.size() < 4;
  CHECK(std::abs(missing / 200.0 - c.missing_phase_prob) <= 0.05);
}

TEST_CASE("default split sizes and disjoint ids") {
  const SynthConfig c;
  int labeled = 0, unlabeled = 0, test = 0;
  for (int i = 0; i < c.count(Domain::Source); ++i) labeled += split_of(c, Domain::Source, i) == Split::Train;
  for (int i = 0; i < c.count(Domain::Target); ++i) {
    unlabeled += split_of(c, Domain::Target, i) == Split::Unlabeled;
    test += split_of(c, Domain::Target, i) == Split::Test;
  }
  CHECK(labeled == 60);
  CHECK(unlabeled == 120);
  CHECK(test == 30);

  const Datasets d = generate_datasets(small_config());
  std::set<std::string> ids;
  std::size_t total = 0;
  for (const auto* split : {&d.labeled, &d.source_val, &d.source_test, &d.unlabeled, &d.target_val, &d.target_test}) {
    for (const Study& s : *split) ids.insert(s.id);
    total += split->size();
  }
  CHECK(ids.size() == total);
  CHECK(d.labeled.size() == 4);
  CHECK(d.unlabeled.size() == 6);
  CHECK(d.target_test.size() == 3);
  for (const Study& s : d.unlabeled) CHECK_FALSE(s.mask.has_value());
  for (const Study& s : d.labeled) CHECK(s.mask.has_value());
  for (const Study& s : d.target_test) CHECK(s.mask.has_value());
  CHECK(d.unlabeled_truth.size() == d.unlabeled.size());
}

TEST_CASE("same seed gives identical split membership") {
  const Datasets a = generate_datasets(small_config());
  const Datasets b = generate_datasets(small_config());
  REQUIRE(a.unlabeled.size() == b.unlabeled.size());
  for (std::size_t i = 0; i < a.unlabeled.size(); ++i) CHECK(a.unlabeled[i].id == b.unlabeled[i].id);
}

TEST_CASE("every study has a liver-containing slice") {
  SynthConfig c;
  for (Domain d : {Domain::Source, Domain::Target}) {
    for (int i = 0; i < 10; ++i) CHECK(region_fraction(generate_study(c, d, i).truth) > 0.0);
  }
}

TEST_CASE("liver-region volume fractions of the two domains are comparable") {
  SynthConfig c;
  double src = 0.0, tgt = 0.0;
  const int n = 20;
  for (int i = 0; i < n; ++i) {
    src += region_fraction(generate_study(c, Domain::Source, i).truth) / n;
    tgt += region_fraction(generate_study(c, Domain::Target, i).truth) / n;
  }
  CHECK(src / tgt <= 2.0);
  CHECK(tgt / src <= 2.0);
}

TEST_CASE("treated-lesion analogs occur only in the target domain") {
  SynthConfig c;
  int tace = 0;
  for (int i = 0; i < c.count(Domain::Source); ++i) CHECK_FALSE(generate_study(c, Domain::Source, i).study.tace);
  for (int i = 0; i < 40; ++i) tace += generate_study(c, Domain::Target, i).study.tace;
  CHECK(tace > 0);
}

TEST_CASE("invalid synthetic configurations are rejected") {
  SynthConfig c;
  c.tace_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  c.target_test = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SynthConfig{};
  CHECK_THROWS(generate_study(c, Domain::Source, c.count(Domain::Source)));
}

TEST_CASE("identity augmentation leaves the slice unchanged") {
  std::mt19937_64 rng(3);
  Tensor img(1, 9, 7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& v : img.data) v = u(rng);
  LabelImage m(9, 7);
  for (auto& v : m.data) v = static_cast<std::uint8_t>(rng() % 3);
  const AugmentedSlice out = augment(img, m, AugmentParams::identity(), 11);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(out.image.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
  CHECK(out.mask->data == m.data);
}

TEST_CASE("90 degree rotation matches a direct index permutation") {
  const int n = 8;
  Tensor img(1, n, n);
  LabelImage m(n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      img(0, y, x) = 0.01 * (y * n + x) + (x < 2 ? 0.3 : 0.0);  // asymmetric pattern
      m(y, x) = static_cast<std::uint8_t>((y < 3) + (x > 5));
    }
  }
  AugmentParams p = AugmentParams::identity();
  p.min_rotation_deg = p.max_rotation_deg = 90.0;
  const AugmentedSlice out = augment(img, m, p, 1);
  std::multiset<int> before, after;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      // Output (y, x) samples input (x, n - 1 - y).
      CHECK(out.image(0, y, x) == doctest::Approx(img(0, x, n - 1 - y)).epsilon(1e-9));
      CHECK((*out.mask)(y, x) == m(x, n - 1 - y));
      before.insert(m(y, x));
      after.insert((*out.mask)(y, x));
      CHECK((*out.mask)(y, x) <= 2);
    }
  }
  CHECK(before == after);
}

TEST_CASE("gamma 2 on a constant image squares it") {
  Tensor img(1, 6, 6, 0.7);
  AugmentParams p = AugmentParams::identity();
  p.min_gamma = p.max_gamma = 2.0;
  const AugmentedSlice out = augment(img, std::nullopt, p, 5);
  for (double v : out.image.data) CHECK(v == doctest::Approx(0.49).epsilon(1e-12));
}

TEST_CASE("augmentation is reproducible under a fixed seed") {
  std::mt19937_64 rng(9);
  Tensor img(1, 16, 16);
  for (double& v : img.data) v = static_cast<double>(rng() % 1000) / 1000.0;
  LabelImage m(16, 16, kLiver);
  const AugmentedSlice a = augment(img, m, AugmentParams{}, 42);
  const AugmentedSlice b = augment(img, m, AugmentParams{}, 42);
  const AugmentedSlice c = augment(img, m, AugmentParams{}, 43);
  CHECK(a.image.data == b.image.data);
  CHECK(a.mask->data == b.mask->data);
  CHECK_FALSE(a.image.data == c.image.data);
}
