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

#include "core/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/error.hpp"
#include "core/evaluation.hpp"

namespace chase {
namespace {

// Stream tags for mix_seed.
constexpr std::uint64_t kPretrainTag = 0x5052455452414eULL;
constexpr std::uint64_t kChaseTag = 0x4348415345ULL;
constexpr std::uint64_t kHolesTag = 0x484f4c4553ULL;
constexpr std::uint64_t kAugTag = 0x415547ULL;
constexpr std::uint64_t kDiscTag = 0x44495343ULL;

struct SliceRef {
  int study = 0;
  int z = 0;
};

void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw DivergenceError("non-finite " + what);
}

BackboneConfig backbone_for(const RunConfig& cfg) {
  BackboneConfig b = cfg.backbone;
  b.height = cfg.synth.height;
  b.width = cfg.synth.width;
  return b;
}

std::vector<PhaseId> phases_of(const PhaseImages& images) {
  std::vector<PhaseId> out;
  for (PhaseId p : kAllPhases) {
    if (images[static_cast<std::size_t>(index_of(p))]) out.push_back(p);
  }
  return out;
}

AugmentParams augment_params(const TrainConfig& t) {
  return t.augment ? AugmentParams{} : AugmentParams::identity();
}

LabeledSlice labeled_slice(const Study& s, int z, const AugmentParams& ap, std::uint64_t seed) {
  AugmentedSlice a = augment(s.phases.at(PhaseId::V).slice(z), s.mask->slice(z), ap, seed);
  return {std::move(a.image), std::move(*a.mask)};
}

PhaseImages augmented_images(const Study& s, int z, const AugmentParams& ap, std::uint64_t seed) {
  PhaseImages images = slice_images(s, z);
  for (auto& img : images) {
    if (img) img = augment(*img, std::nullopt, ap, seed).image;
  }
  return images;
}

template <class Net>
double mean_dsc(const Net& net, std::span<const Study> val, auto predict) {
  if (val.empty()) return 0.0;
  double sum = 0.0;
  for (const Study& s : val) {
    CHASE_REQUIRE(s.mask.has_value(), "validation study " + s.id + " has no mask");
    sum += dsc(liver_region(predict(net, s)), liver_region(*s.mask));
  }
  return sum / static_cast<double>(val.size());
}

// Unlabeled slices whose neighbourhood (+-1 slice) holds predicted liver.
std::vector<SliceRef> liver_slices(const CoHeteroNet& net, std::span<const Study> unlabeled) {
  std::vector<SliceRef> out;
  for (int i = 0; i < static_cast<int>(unlabeled.size()); ++i) {
    const Study& s = unlabeled[static_cast<std::size_t>(i)];
    const LabelMask pred = predict_volume(net, s, ViewCombo::of(s.available_phases()));
    const int depth = pred.labels.d;
    std::vector<char> has(static_cast<std::size_t>(depth), 0);
    const std::size_t plane = static_cast<std::size_t>(pred.labels.h) * pred.labels.w;
    for (int z = 0; z < depth; ++z) {
      for (std::size_t k = 0; k < plane; ++k) {
        const auto v = pred.labels.data[z * plane + k];
        if (v == kLiver || v == kLesion) {
          has[static_cast<std::size_t>(z)] = 1;
          break;
        }
      }
    }
    const bool any = std::find(has.begin(), has.end(), 1) != has.end();
    for (int z = 0; z < depth; ++z) {
      const bool near = has[static_cast<std::size_t>(z)] || (z > 0 && has[static_cast<std::size_t>(z - 1)]) ||
                        (z + 1 < depth && has[static_cast<std::size_t>(z + 1)]);
      if (!any || near) out.push_back({i, z});
    }
  }
  return out;
}

}  // namespace

double validation_dsc(const PhnnNet& net, std::span<const Study> val) {
  return mean_dsc(net, val, [](const PhnnNet& n, const Study& s) {
    return predict_volume(n, s, PhaseId::V);
  });
}

double validation_dsc(const CoHeteroNet& net, std::span<const Study> val) {
  return mean_dsc(net, val, [](const CoHeteroNet& n, const Study& s) {
    return predict_volume(n, s, ViewCombo::of(s.available_phases()));
  });
}

PretrainResult pretrain(const RunConfig& cfg, std::span<const Study> labeled,
                        std::span<const Study> val, const ProgressFn& progress) {
  cfg.validate();
  CHASE_REQUIRE(!labeled.empty(), "pretraining needs labeled studies");
  const TrainConfig& t = cfg.train;
  PhnnNet net(backbone_for(cfg));
  net.init(mix_seed(t.seed, kPretrainTag));
  PretrainResult result{net, 0.0, -1, {}};

  std::vector<SliceRef> pool;
  for (int i = 0; i < static_cast<int>(labeled.size()); ++i) {
    const Study& s = labeled[static_cast<std::size_t>(i)];
    CHASE_REQUIRE(s.mask && s.phases.count(PhaseId::V), "labeled study " + s.id + " needs V and a mask");
    for (int z = 0; z < s.depth(); ++z) pool.push_back({i, z});
  }
  const ClassWeights weights = prevalence_weights(labeled);
  const AugmentParams ap = augment_params(t);
  std::mt19937_64 rng(mix_seed(t.seed, kPretrainTag + 1));
  const std::uint64_t aug_base = mix_seed(t.seed, kPretrainTag ^ kAugTag);
  std::uint64_t aug_counter = 0;

  Adam opt(t.pretrain_lr, t.adam_beta1, t.adam_beta2);
  PlateauScheduler plateau(t.plateau_patience, t.plateau_factor, true);
  std::vector<double> grad(net.params().size());

  for (int epoch = 0; epoch < t.pretrain_epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    const double lr = opt.lr;
    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < pool.size(); start += static_cast<std::size_t>(t.pretrain_batch)) {
      const std::size_t stop = std::min(pool.size(), start + static_cast<std::size_t>(t.pretrain_batch));
      std::vector<LabeledSlice> batch;
      for (std::size_t k = start; k < stop; ++k) {
        const Study& s = labeled[static_cast<std::size_t>(pool[k].study)];
        batch.push_back(labeled_slice(s, pool[k].z, ap, mix_seed(aug_base, aug_counter++)));
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      const double loss = supervised_loss(net, batch, weights, grad);
      require_finite(loss, "pretraining loss at epoch " + std::to_string(epoch));
      opt.step(net.params(), grad);
      loss_sum += loss;
      ++batches;
    }
    const double v = validation_dsc(net, val);
    result.history.push_back({epoch, loss_sum / std::max(batches, 1), v, lr});
    if (result.best_epoch < 0 || v > result.best_val_dsc) {
      result.best_val_dsc = v;
      result.best_epoch = epoch;
      result.net = net;
    }
    plateau.observe(v, opt.lr);
    if (progress) {
      char line[160];
      std::snprintf(line, sizeof line, "pretrain epoch %d loss %.5f val_dsc %.4f lr %.3g", epoch,
                    result.history.back().loss, v, lr);
      progress(line);
    }
  }
  if (result.best_epoch < 0) result.net = net;
  return result;
}

CoHeteroModels init_cohetero_from_pretrained(const PhnnNet& pretrained, const RunConfig& cfg) {
  if (!(pretrained.config() == backbone_for(cfg))) {
    throw ConfigError("pretrained checkpoint architecture does not match the configuration");
  }
  CoHeteroModels m{CoHeteroNet(pretrained.config()), Discriminator(cfg.disc)};
  m.net.load_pretrained(pretrained);
  m.disc.init(mix_seed(cfg.train.seed, kDiscTag));
  return m;
}

std::vector<ViewCombo> sample_views(std::span<const PhaseId> available, int k, std::mt19937_64& rng) {
  std::vector<ViewCombo> all = enumerate_views(available);
  const std::size_t n = std::min(all.size(), static_cast<std::size_t>(std::max(k, 0)));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(n);
  return all;
}

ChaseState::ChaseState(CoHeteroNet n, Discriminator d, const TrainConfig& cfg)
    : net(std::move(n)),
      disc(std::move(d)),
      seg_opt(cfg.seg_lr, cfg.seg_momentum),
      disc_opt(cfg.disc_lr, cfg.adam_beta1, cfg.adam_beta2) {}

SegSubstep segmentation_substep(ChaseState& state, const TrainConfig& cfg,
                                const ClassWeights& weights, StepBatch& batch,
                                std::mt19937_64& rng) {
  CHASE_REQUIRE(!batch.labeled.empty(), "step needs a labeled batch");
  CHASE_REQUIRE(!batch.unlabeled.empty(), "step needs an unlabeled batch");
  const CoHeteroNet& net = state.net;
  SegSubstep r;
  std::vector<double> grad(net.params().size(), 0.0);

  std::vector<ProbMap> source_finals;
  const double l_lab = labeled_seg_loss(net, batch.labeled, weights, grad, &source_finals);
  if (cfg.lambda_h != 0.0 && !batch.holes.empty()) {
    r.l_holes = holes_seg_loss(net, batch.holes, weights, grad, cfg.lambda_h);
  }
  r.l_seg = l_lab + cfg.lambda_h * r.l_holes;
  for (const ProbMap& f : source_finals) r.source_regions.push_back(liver_region_map(f));

  const std::size_t nu = batch.unlabeled.size();
  const double inv_u = 1.0 / static_cast<double>(nu);
  std::vector<CoHeteroNet::Pass> passes;
  std::vector<std::vector<Tensor>> dfinal(nu);
  std::vector<ProbMap> consensus_maps;
  std::vector<Tensor> regions;
  for (std::size_t i = 0; i < nu; ++i) {
    UnlabeledSlice& item = batch.unlabeled[i];
    if (item.combos.empty()) {
      item.combos = sample_views(phases_of(item.images), cfg.combos_per_step, rng);
    }
    passes.push_back(net.forward_views(item.images, item.combos));
    std::vector<const ProbMap*> finals;
    for (const auto& v : passes.back().views) finals.push_back(&v.out.final());
    if (finals.size() >= 2) {
      r.l_cons += inv_u * jsd_loss(finals, &dfinal[i], inv_u, cfg.detach_consensus);
    }
    consensus_maps.push_back(consensus(finals));
    regions.push_back(liver_region_map(consensus_maps.back()));
  }

  r.target = state.disc.forward(regions, Domain::Target);
  std::vector<Tensor> dregions;
  r.l_adv = adversarial_loss(state.disc, r.target, cfg.lambda_adv != 0.0 ? &dregions : nullptr);

  for (std::size_t i = 0; i < nu; ++i) {
    const auto& views = passes[i].views;
    dfinal[i].resize(views.size());
    if (cfg.lambda_adv != 0.0) {
      Tensor dm(consensus_maps[i].c, consensus_maps[i].h, consensus_maps[i].w);
      liver_region_backward(dregions[i], dm, cfg.lambda_adv);
      const double share = 1.0 / static_cast<double>(views.size());
      for (auto& d : dfinal[i]) accumulate(d, dm, share);
    }
    std::vector<StageGrads> g(views.size());
    for (std::size_t v = 0; v < views.size(); ++v) g[v].dprobs[kNumStages - 1] = std::move(dfinal[i][v]);
    net.backward_views(passes[i], g, grad);
  }

  const double total = r.l_seg + r.l_cons + cfg.lambda_adv * r.l_adv;
  require_finite(total, "training loss at step " + std::to_string(state.step));
  state.seg_opt.step(state.net.params(), grad);
  return r;
}

DiscriminatorLossResult discriminator_substep(ChaseState& state, const TrainConfig& cfg,
                                              const SegSubstep& seg) {
  const auto source = state.disc.forward(seg.source_regions, Domain::Source);
  std::vector<double> dgrad(state.disc.params().size(), 0.0);
  const DiscriminatorLossResult r = discriminator_loss(state.disc, source, seg.target, dgrad);
  require_finite(r.loss, "discriminator loss at step " + std::to_string(state.step));
  const double progress = static_cast<double>(state.step) / static_cast<double>(std::max(state.total_steps, 1L));
  state.disc_opt.lr = poly_lr(cfg.disc_lr, progress, cfg.disc_poly_power);
  state.disc_opt.step(state.disc.params(), dgrad);
  return r;
}

StepLosses chase_step(ChaseState& state, const TrainConfig& cfg, const ClassWeights& weights,
                      StepBatch& batch, std::mt19937_64& rng) {
  const SegSubstep seg = segmentation_substep(state, cfg, weights, batch, rng);
  const DiscriminatorLossResult d = discriminator_substep(state, cfg, seg);
  StepLosses out;
  out.step = state.step;
  out.l_seg = seg.l_seg;
  out.l_cons = seg.l_cons;
  out.l_adv = seg.l_adv;
  out.l_d = d.loss;
  out.total = seg.l_seg + seg.l_cons + cfg.lambda_adv * seg.l_adv;
  out.disc_lr = state.disc_opt.lr;
  ++state.step;
  return out;
}

std::string loss_log_csv(std::span<const StepLosses> rows) {
  std::ostringstream os;
  os << "step,L_seg,L_cons,L_adv,L_d,total,disc_lr\n";
  char line[256];
  for (const StepLosses& r : rows) {
    std::snprintf(line, sizeof line, "%ld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.l_seg,
                  r.l_cons, r.l_adv, r.l_d, r.total, r.disc_lr);
    os << line;
  }
  return os.str();
}

ChaseResult run_chase(ChaseState& state, const RunConfig& cfg, int epochs, const ChaseData& data,
                      const ProgressFn& progress) {
  cfg.validate();
  const TrainConfig& t = cfg.train;
  CHASE_REQUIRE(!data.labeled.empty(), "joint training needs labeled studies");
  CHASE_REQUIRE(!data.unlabeled.empty(), "joint training needs unlabeled studies");
  ChaseResult result;
  if (epochs <= 0) return result;

  const ClassWeights weights = prevalence_weights(data.labeled);
  const AugmentParams ap = augment_params(t);
  std::mt19937_64 rng(mix_seed(t.seed, kChaseTag));
  std::mt19937_64 holes_rng(mix_seed(t.seed, kHolesTag));
  const std::uint64_t aug_base = mix_seed(t.seed, kChaseTag ^ kAugTag);
  const std::uint64_t holes_aug_base = mix_seed(t.seed, kHolesTag ^ kAugTag);
  std::uint64_t aug_counter = 0, holes_aug_counter = 0;

  std::vector<SliceRef> labeled_pool;
  for (int i = 0; i < static_cast<int>(data.labeled.size()); ++i) {
    const Study& s = data.labeled[static_cast<std::size_t>(i)];
    CHASE_REQUIRE(s.mask && s.phases.count(PhaseId::V), "labeled study " + s.id + " needs V and a mask");
    for (int z = 0; z < s.depth(); ++z) labeled_pool.push_back({i, z});
  }
  std::vector<SliceRef> holes_pool;
  for (int i = 0; i < static_cast<int>(data.holes.size()); ++i) {
    const LabelMask& m = *data.holes[static_cast<std::size_t>(i)].mask;
    const std::size_t plane = static_cast<std::size_t>(m.labels.h) * m.labels.w;
    for (int z = 0; z < m.labels.d; ++z) {
      const auto* p = m.labels.data.data() + z * plane;
      if (std::find(p, p + plane, kLesion) != p + plane) holes_pool.push_back({i, z});
    }
  }

  PlateauScheduler plateau(t.plateau_patience, t.plateau_factor, true);
  std::uniform_int_distribution<std::size_t> pick_labeled(0, labeled_pool.size() - 1);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<SliceRef> candidates = liver_slices(state.net, data.unlabeled);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    const int steps = t.steps_per_epoch > 0
                          ? t.steps_per_epoch
                          : static_cast<int>((candidates.size() + t.unlabeled_batch - 1) / t.unlabeled_batch);
    if (epoch == 0) state.total_steps = state.step + static_cast<long>(epochs) * steps;
    const double lr = state.seg_opt.lr;
    double loss_sum = 0.0;
    std::size_t cursor = 0;
    for (int s = 0; s < steps; ++s) {
      StepBatch batch;
      for (int i = 0; i < t.labeled_batch; ++i) {
        const SliceRef ref = labeled_pool[pick_labeled(rng)];
        batch.labeled.push_back(labeled_slice(data.labeled[static_cast<std::size_t>(ref.study)], ref.z, ap,
                                              mix_seed(aug_base, aug_counter++)));
      }
      for (int i = 0; i < t.unlabeled_batch; ++i) {
        const SliceRef ref = candidates[cursor++ % candidates.size()];
        batch.unlabeled.push_back({augmented_images(data.unlabeled[static_cast<std::size_t>(ref.study)], ref.z,
                                                    ap, mix_seed(aug_base, aug_counter++)),
                                   {}});
      }
      if (!holes_pool.empty()) {
        std::uniform_int_distribution<std::size_t> pick_hole(0, holes_pool.size() - 1);
        for (int i = 0; i < t.holes_batch; ++i) {
          const SliceRef ref = holes_pool[pick_hole(holes_rng)];
          const Study& hs = data.holes[static_cast<std::size_t>(ref.study)];
          const std::uint64_t seed = mix_seed(holes_aug_base, holes_aug_counter++);
          HolesSlice h;
          const PhaseImages raw = slice_images(hs, ref.z);
          h.images = augmented_images(hs, ref.z, ap, seed);
          const Tensor& first = *raw[static_cast<std::size_t>(index_of(phases_of(raw).front()))];
          h.pseudo = std::move(*augment(first, hs.mask->slice(ref.z), ap, seed).mask);
          h.combos = sample_views(phases_of(h.images), t.combos_per_step, holes_rng);
          batch.holes.push_back(std::move(h));
        }
      }
      const StepLosses row = chase_step(state, t, weights, batch, rng);
      loss_sum += row.total;
      result.log.push_back(row);
    }
    const double v = validation_dsc(state.net, data.val);
    result.history.push_back({epoch, loss_sum / std::max(steps, 1), v, lr});
    plateau.observe(v, state.seg_opt.lr);
    if (progress) {
      char line[200];
      std::snprintf(line, sizeof line, "%s epoch %d loss %.5f val_dsc %.4f lr %.3g",
                    data.holes.empty() ? "train" : "finetune", epoch, result.history.back().loss, v, lr);
      progress(line);
    }
  }
  return result;
}

}  // namespace chase
