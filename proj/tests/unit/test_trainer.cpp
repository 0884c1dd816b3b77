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
#include <filesystem>
#include <set>

#include "core/checkpoint.hpp"
#include "core/trainer.hpp"
#include "helpers.hpp"

using namespace chase;
using namespace chase::test;

namespace {

RunConfig tiny_run() {
  RunConfig cfg;
  cfg.synth.source_train = 4;
  cfg.synth.source_val = 1;
  cfg.synth.source_test = 1;
  cfg.synth.target_unlabeled = 3;
  cfg.synth.target_val = 1;
  cfg.synth.target_test = 1;
  cfg.train.pretrain_epochs = 2;
  cfg.train.chase_epochs = 1;
  cfg.train.steps_per_epoch = 2;
  cfg.train.labeled_batch = 2;
  cfg.train.unlabeled_batch = 2;
  cfg.train.holes_batch = 2;
  return cfg;
}

// Chase state on the tiny 8x8 network with a fresh discriminator.
ChaseState tiny_state(const TrainConfig& t, std::uint64_t seed) {
  CoHeteroNet net(tiny_backbone());
  net.init(seed);
  jitter(net.params(), seed + 1, 0.2);
  Discriminator d(tiny_disc());
  d.init(seed + 2);
  return ChaseState(std::move(net), std::move(d), t);
}

StepBatch tiny_batch(std::mt19937_64& rng, std::vector<ViewCombo> combos = {}) {
  StepBatch b;
  for (int i = 0; i < 2; ++i) b.labeled.push_back({random_image(8, 8, rng), random_labels(8, 8, rng)});
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  for (int i = 0; i < 2; ++i) b.unlabeled.push_back({random_phase_images(all, 8, 8, rng), combos});
  return b;
}

}  // namespace

TEST_CASE("view sampling draws min(k, 2^n - 1) distinct views") {
  std::mt19937_64 rng(1);
  const std::vector<PhaseId> two{PhaseId::A, PhaseId::V};
  CHECK(sample_views(two, 4, rng).size() == 3);
  const std::vector<PhaseId> one{PhaseId::D};
  CHECK(sample_views(one, 4, rng).size() == 1);
  const std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
  for (int i = 0; i < 50; ++i) {
    const auto v = sample_views(all, 4, rng);
    REQUIRE(v.size() == 4);
    std::set<unsigned> bits;
    for (const auto& c : v) bits.insert(c.bits());
    CHECK(bits.size() == 4);
  }
  std::mt19937_64 a(7), b(7);
  CHECK(sample_views(all, 4, a) == sample_views(all, 4, b));
}

TEST_CASE("co-hetero initialisation from a pretrained network") {
  RunConfig cfg;
  PhnnNet pre(cfg.backbone);
  pre.init(2);
  const CoHeteroModels m = init_cohetero_from_pretrained(pre, cfg);
  const auto& p = m.net.params();
  const Stem& ref = m.net.stem(PhaseId::NC);
  for (PhaseId ph : kAllPhases) {
    const Stem& s = m.net.stem(ph);
    CHECK(std::equal(p.begin() + static_cast<std::ptrdiff_t>(s.begin), p.begin() + static_cast<std::ptrdiff_t>(s.end),
                     p.begin() + static_cast<std::ptrdiff_t>(ref.begin)));
  }
  const nn::Conv2d& conv = m.net.trunk().stages[0].convs[0];
  const int half = conv.in / 2, kk = conv.kernel * conv.kernel;
  bool zero = true;
  for (int o = 0; o < conv.out; ++o)
    for (int i = half; i < conv.in; ++i)
      for (int k = 0; k < kk; ++k) zero = zero && p[conv.offset + (static_cast<std::size_t>(o) * conv.in + i) * kk + k] == 0.0;
  CHECK(zero);

  RunConfig other = cfg;
  other.backbone.channels[0] = 8;
  CHECK_THROWS_AS(init_cohetero_from_pretrained(pre, other), ConfigError);
}

TEST_CASE("sub-steps respect the freezing contract and the loss composition") {
  TrainConfig t;
  t.lambda_adv = 0.5;
  ChaseState st = tiny_state(t, 3);
  std::mt19937_64 rng(4);
  StepBatch batch = tiny_batch(rng);
  const ClassWeights w;
  const auto disc_hash = param_hash(st.disc.params());
  const auto seg_hash = param_hash(st.net.params());
  const SegSubstep seg = segmentation_substep(st, t, w, batch, rng);
  CHECK(param_hash(st.disc.params()) == disc_hash);
  CHECK(param_hash(st.net.params()) != seg_hash);
  const auto seg_after = param_hash(st.net.params());
  discriminator_substep(st, t, seg);
  CHECK(param_hash(st.net.params()) == seg_after);
  CHECK(param_hash(st.disc.params()) != disc_hash);

  StepBatch b2 = tiny_batch(rng);
  const StepLosses l = chase_step(st, t, w, b2, rng);
  CHECK(std::abs(l.total - (l.l_seg + l.l_cons + t.lambda_adv * l.l_adv)) <= 1e-6);
  CHECK(l.l_cons > 0.0);
}

TEST_CASE("one target discriminator forward per step regardless of the view count") {
  TrainConfig t;
  std::mt19937_64 rng(5);
  for (int k : {1, 2, 4, 15}) {
    t.combos_per_step = k;
    ChaseState st = tiny_state(t, 6);
    for (int step = 0; step < 2; ++step) {
      st.disc.reset_counters();
      StepBatch b = tiny_batch(rng);
      chase_step(st, t, ClassWeights{}, b, rng);
      CHECK(st.disc.target_calls() == 1);
      CHECK(st.disc.source_calls() == 1);
      CHECK(b.unlabeled[0].combos.size() == static_cast<std::size_t>(k));
    }
  }
}

TEST_CASE("with agreeing views and no adversarial weight only the labeled loss moves the network") {
  TrainConfig t;
  t.lambda_adv = 0.0;
  t.seg_lr = 1e-3;
  ChaseState st = tiny_state(t, 7);
  // Identical stems and identical phase images make every view agree.
  auto& p = st.net.params();
  const Stem& nc = st.net.stem(PhaseId::NC);
  for (PhaseId ph : {PhaseId::A, PhaseId::V, PhaseId::D}) {
    std::copy(p.begin() + static_cast<std::ptrdiff_t>(nc.begin), p.begin() + static_cast<std::ptrdiff_t>(nc.end),
              p.begin() + static_cast<std::ptrdiff_t>(st.net.stem(ph).begin));
  }
  std::mt19937_64 rng(8);
  StepBatch b = tiny_batch(rng, {ViewCombo::parse("NC"), ViewCombo::parse("A+V"), ViewCombo::parse("NC+A+V+D")});
  for (auto& u : b.unlabeled) {
    for (auto& img : u.images) img = *u.images[0];
  }
  std::vector<double> g(p.size(), 0.0);
  labeled_seg_loss(st.net, b.labeled, ClassWeights{}, g);
  std::vector<double> expect = p;
  for (std::size_t i = 0; i < p.size(); ++i) expect[i] -= t.seg_lr * g[i];
  const SegSubstep r = segmentation_substep(st, t, ClassWeights{}, b, rng);
  CHECK(r.l_cons <= 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) worst = std::max(worst, std::abs(p[i] - expect[i]));
  CHECK(worst <= 1e-6 * t.seg_lr);
}

TEST_CASE("the segmentation update follows the gradient of the full objective") {
  TrainConfig t;
  t.lambda_adv = 1.0;
  t.seg_lr = 1.0;
  ChaseState st = tiny_state(t, 9);
  REQUIRE(st.net.params().size() + st.disc.params().size() <= 5000);
  std::mt19937_64 rng(10);
  StepBatch b = tiny_batch(rng, {ViewCombo::parse("D"), ViewCombo::parse("A+V"), ViewCombo::parse("NC+A+V+D")});
  ClassWeights w;
  w.w = {0.5, 1.0, 1.5};
  auto objective = [&] {
    double l = labeled_seg_loss(st.net, b.labeled, w);
    const std::vector<UnlabeledSlice> u(b.unlabeled.begin(), b.unlabeled.end());
    l += cons_loss_batch(st.net, u);
    std::vector<Tensor> regions;
    for (const auto& item : u) {
      std::vector<ProbMap> finals;
      for (const auto& c : item.combos) finals.push_back(st.net.forward(item.images, c).final());
      std::vector<const ProbMap*> ptrs;
      for (const auto& f : finals) ptrs.push_back(&f);
      regions.push_back(liver_region_map(consensus(ptrs)));
    }
    return l + t.lambda_adv * adversarial_loss(st.disc, st.disc.forward(regions, Domain::Target));
  };
  std::vector<double> before = st.net.params();
  segmentation_substep(st, t, w, b, rng);
  // First momentum step with lr 1: the update is the gradient itself.
  std::vector<double> analytic(before.size());
  for (std::size_t i = 0; i < before.size(); ++i) analytic[i] = before[i] - st.net.params()[i];
  st.net.params() = before;
  const GradCheck r = check_gradient(st.net.params(), analytic, objective);
  CHECK(r.max_rel <= 1e-4);
}

TEST_CASE("discriminator learning rate follows the polynomial schedule") {
  CHECK(poly_lr(3e-4, 0.0) == 3e-4);
  CHECK(poly_lr(3e-4, 1.0) == 0.0);
  TrainConfig t;
  ChaseState st = tiny_state(t, 11);
  st.total_steps = 10;
  std::mt19937_64 rng(12);
  for (int s = 0; s < 4; ++s) {
    StepBatch b = tiny_batch(rng);
    const StepLosses l = chase_step(st, t, ClassWeights{}, b, rng);
    CHECK(std::abs(l.disc_lr - t.disc_lr * std::pow(1.0 - s / 10.0, 0.9)) <= 1e-9);
  }
}

TEST_CASE("pretraining smoke run is deterministic and checkpointable") {
  const RunConfig cfg = tiny_run();
  const Datasets d = generate_datasets(cfg.synth);
  const PretrainResult a = pretrain(cfg, d.labeled, d.source_val);
  const PretrainResult b = pretrain(cfg, d.labeled, d.source_val);
  CHECK(a.history.size() == 2);
  CHECK(a.best_val_dsc == b.best_val_dsc);
  CHECK(a.net.params() == b.net.params());
  const auto path = std::filesystem::temp_directory_path() / "chase_pretrain_smoke.ckpt";
  save_phnn(path, a.net);
  CHECK(load_phnn(path).params() == a.net.params());
  std::filesystem::remove(path);
}

TEST_CASE("an empty holes set or zero holes weight leaves the joint trajectory unchanged") {
  RunConfig cfg = tiny_run();
  const Datasets d = generate_datasets(cfg.synth);
  PhnnNet pre(cfg.backbone);
  pre.init(13);
  auto run = [&](std::span<const Study> holes, double lambda_h) {
    RunConfig c = cfg;
    c.train.lambda_h = lambda_h;
    CoHeteroModels m = init_cohetero_from_pretrained(pre, c);
    ChaseState st(std::move(m.net), std::move(m.disc), c.train);
    const ChaseResult r = run_chase(st, c, 1, {d.labeled, d.unlabeled, d.target_val, holes});
    return std::make_pair(st.net.params(), r.log.back().total);
  };
  const auto plain = run({}, 0.01);
  const auto again = run({}, 0.01);
  CHECK(plain.first == again.first);

  // A hand-made holes record.
  Study h = d.unlabeled[0];
  LabelMask pseudo;
  pseudo.labels = Grid3<std::uint8_t>(h.depth(), cfg.synth.height, cfg.synth.width, kIgnore);
  for (int z = 4; z < 10; ++z)
    for (int y = 10; y < 16; ++y)
      for (int x = 10; x < 16; ++x) pseudo.labels(z, y, x) = kLesion;
  h.mask = pseudo;
  const std::vector<Study> holes{h};
  const auto zero_weight = run(holes, 0.0);
  CHECK(zero_weight.first == plain.first);
  CHECK(zero_weight.second == plain.second);
  const auto weighted = run(holes, 0.01);
  CHECK_FALSE(weighted.first == plain.first);
}
