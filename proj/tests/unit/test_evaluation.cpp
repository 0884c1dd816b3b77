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
#include <cmath>
#include <limits>
#include <random>

#include "core/evaluation.hpp"
#include "helpers.hpp"

using namespace chase;

namespace {

BinaryMask box(int n, int z0, int z1, int y0, int y1, int x0, int x1) {
  BinaryMask m(n, n, n, 0);
  for (int z = z0; z < z1; ++z)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) m(z, y, x) = 1;
  return m;
}

BinaryMask random_mask(int n, std::mt19937_64& rng, double p) {
  std::bernoulli_distribution b(p);
  BinaryMask m(n, n, n, 0);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

// Surface and distances from first principles: every surface voxel of one
// mask against every surface voxel of the other.
std::optional<double> assd_oracle(const BinaryMask& a, const BinaryMask& b, const Spacing& s) {
  auto surface = [](const BinaryMask& m) {
    std::vector<std::array<int, 3>> pts;
    auto fg = [&](int z, int y, int x) {
      return z >= 0 && y >= 0 && x >= 0 && z < m.d && y < m.h && x < m.w && m(z, y, x);
    };
    for (int z = 0; z < m.d; ++z)
      for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
          if (!m(z, y, x)) continue;
          if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) ||
              !fg(z, y, x - 1) || !fg(z, y, x + 1))
            pts.push_back({z, y, x});
        }
    return pts;
  };
  const auto sa = surface(a), sb = surface(b);
  if (sa.empty() || sb.empty()) return std::nullopt;
  auto nearest = [&](const std::array<int, 3>& p, const std::vector<std::array<int, 3>>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set) {
      const double dz = (p[0] - q[0]) * s.z, dy = (p[1] - q[1]) * s.y, dx = (p[2] - q[2]) * s.x;
      best = std::min(best, std::sqrt(dz * dz + dy * dy + dx * dx));
    }
    return best;
  };
  double total = 0.0;
  for (const auto& p : sa) total += nearest(p, sb);
  for (const auto& p : sb) total += nearest(p, sa);
  return total / static_cast<double>(sa.size() + sb.size());
}

std::size_t count(const BinaryMask& m) { return static_cast<std::size_t>(std::count(m.data.begin(), m.data.end(), 1)); }

SynthConfig small_synth() {
  SynthConfig c;
  c.source_train = 1;
  c.source_val = 1;
  c.source_test = 1;
  c.target_unlabeled = 1;
  c.target_val = 1;
  c.target_test = 4;
  c.missing_phase_prob = 0.5;
  return c;
}

// Predicts liver at every pixel.
PhnnNet all_liver_net() {
  PhnnNet net{BackboneConfig{}};
  net.init(1);
  net.zero_heads();
  net.params()[net.stem().head1.bias_offset() + kLiver] = 10.0;
  return net;
}

}  // namespace

TEST_CASE("dice coefficient") {
  const BinaryMask a = box(10, 0, 1, 0, 10, 0, 10);  // 100 voxels
  const BinaryMask b = box(10, 1, 2, 0, 10, 0, 10);  // 100 voxels, disjoint
  CHECK(dsc(a, a) == 1.0);
  CHECK(dsc(a, b) == 0.0);
  const BinaryMask half = box(10, 0, 1, 0, 5, 0, 10);
  CHECK(dsc(a, half) == doctest::Approx(2.0 * 50 / 150).epsilon(1e-15));
  const BinaryMask empty(10, 10, 10, 0);
  CHECK(dsc(empty, empty) == 1.0);
  CHECK(dsc(a, empty) == 0.0);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const BinaryMask p = random_mask(6, rng, 0.4), g = random_mask(6, rng, 0.4);
    std::size_t inter = 0;
    for (std::size_t k = 0; k < p.size(); ++k) inter += p.data[k] && g.data[k];
    CHECK(dsc(p, g) == doctest::Approx(2.0 * inter / (count(p) + count(g))).epsilon(1e-14));
  }
}

TEST_CASE("surface distance matches the all-pairs oracle") {
  std::mt19937_64 rng(2);
  const Spacing sp{2.0, 1.0, 1.0};
  for (int i = 0; i < 15; ++i) {
    const BinaryMask p = random_mask(7, rng, 0.5), g = random_mask(7, rng, 0.3);
    const auto got = assd(p, g, sp);
    const auto want = assd_oracle(p, g, sp);
    REQUIRE(got.has_value() == want.has_value());
    if (got) CHECK(std::abs(*got - *want) <= 1e-9);
    CHECK(*assd(p, g, sp) == doctest::Approx(*assd(g, p, sp)).epsilon(1e-12));
  }
  const BinaryMask c = box(12, 2, 6, 2, 6, 2, 6);
  CHECK(*assd(c, c, sp) == 0.0);
  // One-voxel shift along z: every surface voxel is at most one slice apart.
  const BinaryMask shifted = box(12, 3, 7, 2, 6, 2, 6);
  const double d = *assd(c, shifted, sp);
  CHECK(d > 0.0);
  CHECK(d <= 2.0);
  CHECK(std::abs(d - *assd_oracle(c, shifted, sp)) <= 1e-9);
  const BinaryMask empty(12, 12, 12, 0);
  CHECK_FALSE(assd(c, empty, sp).has_value());
  CHECK_FALSE(assd(empty, c, sp).has_value());
}

TEST_CASE("surface voxels of a solid box") {
  const BinaryMask c = box(8, 1, 5, 1, 5, 1, 5);
  CHECK(count(surface_voxels(c)) == 64 - 8);
  // The volume border counts as outside.
  const BinaryMask full(3, 3, 3, 1);
  CHECK(count(surface_voxels(full)) == 26);
}

TEST_CASE("slice stacking and majority vote") {
  std::mt19937_64 rng(3);
  std::vector<LabelImage> slices;
  for (int z = 0; z < 3; ++z) slices.push_back(test::random_labels(4, 5, rng));
  const LabelMask m = stack_slices(slices);
  REQUIRE(m.labels.d == 3);
  for (int z = 0; z < 3; ++z)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 5; ++x) CHECK(m.labels(z, y, x) == slices[z](y, x));

  const BinaryMask a = random_mask(5, rng, 0.5), b = random_mask(5, rng, 0.5), c = random_mask(5, rng, 0.5);
  const std::vector<BinaryMask> three{a, b, c};
  const BinaryMask v3 = majority_vote(three);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(v3.data[k] == (a.data[k] + b.data[k] + c.data[k] >= 2));
  const std::vector<BinaryMask> two{a, b};
  const BinaryMask v2 = majority_vote(two);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(v2.data[k] == (a.data[k] && b.data[k]));
  const std::vector<BinaryMask> one{a};
  CHECK(majority_vote(one) == a);
  const std::vector<BinaryMask> same{a, a, a, a};
  CHECK(majority_vote(same) == a);
}

TEST_CASE("box statistics use linear interpolation") {
  const BoxStats b = box_stats({5, 1, 4, 2, 3});
  CHECK(b.min == 1);
  CHECK(b.q1 == 2);
  CHECK(b.median == 3);
  CHECK(b.q3 == 4);
  CHECK(b.max == 5);
  const BoxStats e = box_stats({1, 2, 3, 4});
  CHECK(e.median == doctest::Approx(2.5));
  CHECK(e.q1 == doctest::Approx(1.75));
}

TEST_CASE("evaluation of a constant-liver predictor against closed forms") {
  const Datasets d = generate_datasets(small_synth());
  const PhnnNet net = all_liver_net();
  const SegModel model{"const", &net, FusionRule::MajorityVote};

  const MetricReport all = evaluate(model, d.target_test, EvalMode::AllCombos);
  CHECK(all.rows.size() == 15 * d.target_test.size());
  int skipped = 0;
  for (const MetricRow& r : all.rows) {
    const Study& s = *std::find_if(d.target_test.begin(), d.target_test.end(),
                                   [&](const Study& t) { return t.id == r.study; });
    const ViewCombo c = ViewCombo::parse(r.combo);
    const bool has_all = std::all_of(c.phases.begin(), c.phases.end(), [&](PhaseId p) { return s.phases.count(p) > 0; });
    CHECK(r.scored == has_all);
    if (!r.scored) {
      ++skipped;
      CHECK(r.skip_reason.rfind("missing phase", 0) == 0);
      continue;
    }
    const BinaryMask gt = liver_region(*s.mask);
    const double g = static_cast<double>(count(gt));
    CHECK(r.dsc == doctest::Approx(2.0 * g / (g + static_cast<double>(gt.size()))).epsilon(1e-12));
    BinaryMask full(gt.d, gt.h, gt.w, 1);
    CHECK(*r.assd == doctest::Approx(*assd_oracle(full, gt, s.mask->spacing)).epsilon(1e-9));
  }
  CHECK(skipped > 0);

  const MetricReport avail = evaluate(model, d.target_test, EvalMode::AllAvailable);
  CHECK(avail.rows.size() == d.target_test.size());
  for (const MetricRow& r : avail.rows) CHECK((r.combo == "all" && r.scored));

  const MetricReport single = evaluate(model, d.target_test, EvalMode::SinglePhase);
  CHECK(single.rows.size() == 4 * d.target_test.size());
  CHECK(single.summary.size() == 4);
}

TEST_CASE("a perfect prediction scores DSC 1 and ASSD 0") {
  const Datasets d = generate_datasets(small_synth());
  for (const Study& s : d.target_test) {
    const BinaryMask gt = liver_region(*s.mask);
    CHECK(dsc(gt, gt) == 1.0);
    CHECK(*assd(gt, gt, s.mask->spacing) == 0.0);
  }
}

TEST_CASE("metric CSV is deterministic and round-trips") {
  const Datasets d = generate_datasets(small_synth());
  const PhnnNet net = all_liver_net();
  const SegModel model{"const", &net, FusionRule::MajorityVote};
  const std::vector<MetricReport> a{evaluate(model, d.target_test, EvalMode::AllCombos)};
  const std::vector<MetricReport> b{evaluate(model, d.target_test, EvalMode::AllCombos)};
  CHECK(metrics_csv(a) == metrics_csv(b));
  CHECK(summary_csv(a) == summary_csv(b));
  CHECK(box_csv(a) == box_csv(b));
  const std::vector<MetricReport> back = parse_metrics_csv(metrics_csv(a));
  REQUIRE(back.size() == 1);
  CHECK(back[0].model == "const");
  CHECK(metrics_csv(back) == metrics_csv(a));
  // Metrics are stored with six decimals, so recomputed summaries agree to that precision.
  REQUIRE(back[0].summary.size() == a[0].summary.size());
  for (std::size_t i = 0; i < a[0].summary.size(); ++i) {
    CHECK(back[0].summary[i].count == a[0].summary[i].count);
    CHECK(std::abs(back[0].summary[i].mean_dsc - a[0].summary[i].mean_dsc) <= 1e-6);
  }
  CHECK_FALSE(summary_text(a).empty());
  CHECK_THROWS(parse_metrics_csv("not,a,header\n"));
}

TEST_CASE("mean DSC filters by combo and treated studies") {
  MetricReport r;
  r.rows = {{"a", "V", true, 0.8, 1.0, "", false},
            {"b", "V", true, 0.6, 2.0, "", true},
            {"c", "V", false, 0.0, std::nullopt, "missing phase V", true},
            {"a", "A", true, 0.1, 1.0, "", false}};
  CHECK(*r.mean_dsc("V") == doctest::Approx(0.7));
  CHECK(*r.mean_dsc("V", true) == doctest::Approx(0.6));
  CHECK_FALSE(r.mean_dsc("D").has_value());
  const auto s = summarize(r.rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].combo == "V");
  CHECK(s[0].count == 2);
}

TEST_CASE("evaluation mode names round-trip") {
  for (EvalMode m : {EvalMode::SinglePhase, EvalMode::AllAvailable, EvalMode::AllCombos})
    CHECK(parse_eval_mode(eval_mode_name(m)) == m);
  CHECK_THROWS(parse_eval_mode("bogus"));
}
