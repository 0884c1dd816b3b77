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

#include "core/synthdata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace chase {

std::string_view phase_name(PhaseId p) noexcept {
  switch (p) {
    case PhaseId::NC: return "NC";
    case PhaseId::A: return "A";
    case PhaseId::V: return "V";
    case PhaseId::D: return "D";
  }
  return "?";
}

PhaseId parse_phase(std::string_view name) {
  std::string up(name);
  for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "NC") return PhaseId::NC;
  if (up == "A") return PhaseId::A;
  if (up == "V") return PhaseId::V;
  if (up == "D") return PhaseId::D;
  throw ContractError("unknown phase '" + std::string(name) + "'");
}

std::string_view domain_name(Domain d) noexcept {
  return d == Domain::Source ? "source" : "target";
}

std::string_view split_name(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unlabeled: return "unlabeled";
    case Split::Holes: return "holes";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s == "unlabeled") return Split::Unlabeled;
  if (s == "holes") return Split::Holes;
  throw ContractError("unknown split '" + std::string(s) + "'");
}

Tensor Volume::slice(int z) const {
  CHASE_REQUIRE(z >= 0 && z < voxels.d, "slice index out of range");
  Tensor t(1, voxels.h, voxels.w);
  const std::size_t base = voxels.index(z, 0, 0);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = voxels.data[base + i];
  return t;
}

LabelImage LabelMask::slice(int z) const {
  CHASE_REQUIRE(z >= 0 && z < labels.d, "slice index out of range");
  LabelImage img(labels.h, labels.w);
  const std::size_t base = labels.index(z, 0, 0);
  std::copy_n(labels.data.begin() + static_cast<std::ptrdiff_t>(base), img.data.size(),
              img.data.begin());
  return img;
}

void LabelMask::check_values() const {
  for (std::uint8_t v : labels.data) {
    if (v != kBackground && v != kLiver && v != kLesion && v != kIgnore) {
      throw ContractError("label mask contains value " + std::to_string(v));
    }
  }
}

std::vector<PhaseId> Study::available_phases() const {
  std::vector<PhaseId> out;
  for (const auto& [p, v] : phases) out.push_back(p);
  return out;
}

int Study::depth() const {
  CHASE_REQUIRE(!phases.empty(), "study has no phases");
  return phases.begin()->second.voxels.d;
}

void Study::validate() const {
  CHASE_REQUIRE(!phases.empty(), "study " + id + " has no phases");
  const Volume& ref = phases.begin()->second;
  for (const auto& [p, v] : phases) {
    CHASE_REQUIRE(v.voxels.same_shape(ref.voxels) && v.spacing == ref.spacing,
                  "study " + id + ": phase volumes differ in shape or spacing");
  }
  if (mask) {
    CHASE_REQUIRE(mask->labels.same_shape(ref.voxels), "study " + id + ": mask shape differs");
    mask->check_values();
    if (domain == Domain::Source) {
      for (std::uint8_t v : mask->labels.data) {
        CHASE_REQUIRE(v != kIgnore, "source mask contains IGNORE");
      }
    }
  }
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (source_train < 1 || source_val < 1 || source_test < 1 || target_unlabeled < 1 ||
      target_val < 1 || target_test < 1) {
    fail("dataset counts must be >= 1");
  }
  if (depth < 4 || height < 8 || width < 8) fail("volume shape too small");
  if (!(spacing.z > 0 && spacing.y > 0 && spacing.x > 0)) fail("spacing must be positive");
  auto prob = [&](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) fail(std::string(name) + " must lie in [0,1]");
  };
  prob(tace_prob, "tace_prob");
  prob(missing_phase_prob, "missing_phase_prob");
  if (!std::isfinite(tace_intensity)) fail("tace_intensity must be finite");
  if (!(noise_sigma >= 0) || !(texture_amplitude >= 0)) fail("noise levels must be >= 0");
  if (!(target_organ_scale > 0)) fail("target_organ_scale must be positive");
  if (max_lesions < 0) fail("max_lesions must be >= 0");
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Split split_of(const SynthConfig& cfg, Domain domain, int index) {
  if (domain == Domain::Source) {
    if (index < cfg.source_train) return Split::Train;
    if (index < cfg.source_train + cfg.source_val) return Split::Val;
    return Split::Test;
  }
  if (index < cfg.target_unlabeled) return Split::Unlabeled;
  if (index < cfg.target_unlabeled + cfg.target_val) return Split::Val;
  return Split::Test;
}

namespace {

struct Ellipsoid {
  double cz, cy, cx;
  double rz, ry, rx;
  double wobble = 0.0;  // in-plane radial modulation amplitude
  double wobble_phase = 0.0;

  // Normalised radius; < 1 inside.
  double rho(double z, double y, double x) const {
    const double dz = (z - cz) / rz;
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    double r = std::sqrt(dz * dz + dy * dy + dx * dx);
    if (wobble != 0.0) {
      const double theta = std::atan2(dy, dx);
      r /= 1.0 + wobble * std::sin(2.0 * theta + wobble_phase);
    }
    return r;
  }
  bool contains(double z, double y, double x) const { return rho(z, y, x) < 1.0; }
};

// Smooth texture: a few random plane waves shared by all phases of a study.
struct Texture {
  struct Wave {
    double kz, ky, kx, phase, amp;
  };
  std::vector<Wave> waves;

  double operator()(double z, double y, double x) const {
    double v = 0.0;
    for (const Wave& w : waves) v += w.amp * std::cos(w.kz * z + w.ky * y + w.kx * x + w.phase);
    return v;
  }
};

enum Tissue : std::uint8_t { kAir, kBody, kBone, kSpleen, kLiverTissue, kLesionTissue, kTace };

double tissue_intensity(const PhaseAppearance& a, double tace, Tissue t) {
  switch (t) {
    case kAir: return 0.0;
    case kBody: return a.body;
    case kBone: return a.bone;
    case kSpleen: return a.spleen;
    case kLiverTissue: return a.liver;
    case kLesionTissue: return a.lesion;
    case kTace: return tace;  // non-enhancing deposit, same intensity in every phase
  }
  return 0.0;
}

}  // namespace

GeneratedStudy generate_study(const SynthConfig& cfg, Domain domain, int index) {
  cfg.validate();
  CHASE_REQUIRE(index >= 0 && index < cfg.count(domain), "study index out of range");

  std::mt19937_64 rng(mix_seed(mix_seed(cfg.seed, domain == Domain::Source ? 1 : 2),
                               static_cast<std::uint64_t>(index)));
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };

  const bool target = domain == Domain::Target;
  const int D = cfg.depth, H = cfg.height, W = cfg.width;
  const double aspect = cfg.spacing.y / cfg.spacing.z;  // voxels in z per in-plane voxel

  // Anatomy.
  const double organ_scale = uni(0.9, 1.08) * (target ? cfg.target_organ_scale : 1.0);
  Ellipsoid liver{D * 0.5 + uni(-0.6, 0.6), H * 0.46 + uni(-1.0, 1.0), W * 0.38 + uni(-1.0, 1.0),
                  D * 0.36 * organ_scale, H * 0.27 * organ_scale, W * 0.25 * organ_scale,
                  uni(0.0, 0.08), uni(0.0, 2.0 * std::numbers::pi)};
  liver.rz = std::min(liver.rz, D * 0.46);
  Ellipsoid spleen{D * 0.5 + uni(-1.0, 1.0), H * 0.42 + uni(-1.0, 1.0), W * 0.79 + uni(-0.8, 0.8),
                   D * 0.26, H * 0.13 * uni(0.9, 1.2), W * 0.09 * uni(0.9, 1.2)};
  const double body_ry = H * 0.46, body_rx = W * 0.48;
  const double spine_y = H * 0.80, spine_x = W * 0.55 + uni(-0.5, 0.5), spine_r = W * 0.07;

  struct Blob {
    Ellipsoid shape;
    Tissue tissue;
  };
  std::vector<Blob> lesions;
  std::uniform_int_distribution<int> nles(0, cfg.max_lesions);
  const int n_lesions = nles(rng);
  auto place_in_liver = [&](double r_inplane, double max_rho) {
    const double a = uni(0.0, 2.0 * std::numbers::pi);
    const double rr = uni(0.0, max_rho);
    const double zz = uni(-0.4, 0.4) * max_rho;
    return Ellipsoid{liver.cz + zz * liver.rz, liver.cy + rr * std::sin(a) * liver.ry,
                     liver.cx + rr * std::cos(a) * liver.rx, std::max(1.0, r_inplane * aspect),
                     r_inplane, r_inplane};
  };
  for (int i = 0; i < n_lesions; ++i) {
    lesions.push_back({place_in_liver(uni(1.8, 3.2), 0.55), kLesionTissue});
  }
  bool tace = false;
  if (target && U(rng) < cfg.tace_prob) {
    tace = true;
    const double r = uni(4.0, 4.6);
    Ellipsoid e = place_in_liver(r, 0.08);
    e.rz = std::max(e.rz, uni(3.4, 4.0));
    lesions.push_back({e, kTace});
  }

  Texture texture;
  for (int i = 0; i < 3; ++i) {
    texture.waves.push_back({uni(-0.5, 0.5), uni(-0.9, 0.9), uni(-0.9, 0.9),
                             uni(0.0, 2.0 * std::numbers::pi), cfg.texture_amplitude * uni(0.5, 1.0)});
  }

  // Tissue map and labels.
  Grid3<std::uint8_t> tissue(D, H, W, kAir);
  LabelMask truth;
  truth.labels = Grid3<std::uint8_t>(D, H, W, kBackground);
  truth.spacing = cfg.spacing;
  for (int z = 0; z < D; ++z) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double yy = y + 0.5, xx = x + 0.5, zz = z + 0.5;
        const double by = (yy - H * 0.5) / body_ry, bx = (xx - W * 0.5) / body_rx;
        Tissue t = kAir;
        if (by * by + bx * bx < 1.0) t = kBody;
        const double sy = yy - spine_y, sx = xx - spine_x;
        if (sy * sy + sx * sx < spine_r * spine_r) t = kBone;
        if (spleen.contains(zz, yy, xx)) t = kSpleen;
        std::uint8_t label = kBackground;
        if (liver.contains(zz, yy, xx)) {
          t = kLiverTissue;
          label = kLiver;
          for (const Blob& b : lesions) {
            if (b.shape.contains(zz, yy, xx)) {
              t = b.tissue;
              label = kLesion;
            }
          }
        }
        tissue(z, y, x) = t;
        truth.labels(z, y, x) = label;
      }
    }
  }

  // Phase selection.
  std::vector<PhaseId> phases;
  if (!target) {
    phases = {PhaseId::V};
  } else if (U(rng) < cfg.missing_phase_prob) {
    std::vector<PhaseId> all(kAllPhases.begin(), kAllPhases.end());
    std::shuffle(all.begin(), all.end(), rng);
    std::uniform_int_distribution<int> nkeep(1, 3);
    all.resize(static_cast<std::size_t>(nkeep(rng)));
    std::sort(all.begin(), all.end());
    phases = all;
  } else {
    phases.assign(kAllPhases.begin(), kAllPhases.end());
  }

  const double bias = target ? cfg.target_bias + uni(-0.015, 0.015) : 0.0;
  GeneratedStudy out;
  Study& s = out.study;
  char id[32];
  std::snprintf(id, sizeof id, "%s-%04d", target ? "tgt" : "src", index);
  s.id = id;
  s.domain = domain;
  s.tace = tace;
  for (PhaseId p : phases) {
    // Per-phase noise stream independent of which other phases exist.
    std::mt19937_64 prng(mix_seed(rng(), static_cast<std::uint64_t>(index_of(p)) + 11));
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    const PhaseAppearance& app = cfg.appearance[static_cast<std::size_t>(index_of(p))];
    Volume v;
    v.spacing = cfg.spacing;
    v.voxels = Grid3<float>(D, H, W);
    for (int z = 0; z < D; ++z) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          const Tissue t = static_cast<Tissue>(tissue(z, y, x));
          double val = tissue_intensity(app, cfg.tace_intensity, t);
          if (t != kAir) val += texture(z, y, x) + bias;
          val += noise(prng);
          v.voxels(z, y, x) = static_cast<float>(std::clamp(val, 0.0, 1.0));
        }
      }
    }
    s.phases.emplace(p, std::move(v));
  }
  out.truth = std::move(truth);
  const Split split = split_of(cfg, domain, index);
  if (split != Split::Unlabeled) s.mask = out.truth;
  return out;
}

Datasets generate_datasets(const SynthConfig& cfg) {
  cfg.validate();
  Datasets ds;
  for (int i = 0; i < cfg.count(Domain::Source); ++i) {
    GeneratedStudy g = generate_study(cfg, Domain::Source, i);
    switch (split_of(cfg, Domain::Source, i)) {
      case Split::Train: ds.labeled.push_back(std::move(g.study)); break;
      case Split::Val: ds.source_val.push_back(std::move(g.study)); break;
      default: ds.source_test.push_back(std::move(g.study)); break;
    }
  }
  for (int i = 0; i < cfg.count(Domain::Target); ++i) {
    GeneratedStudy g = generate_study(cfg, Domain::Target, i);
    switch (split_of(cfg, Domain::Target, i)) {
      case Split::Unlabeled:
        ds.unlabeled_truth.emplace(g.study.id, std::move(g.truth));
        ds.unlabeled.push_back(std::move(g.study));
        break;
      case Split::Val: ds.target_val.push_back(std::move(g.study)); break;
      default: ds.target_test.push_back(std::move(g.study)); break;
    }
  }
  return ds;
}

AugmentedSlice augment(const Tensor& image, const std::optional<LabelImage>& mask,
                       const AugmentParams& params, std::uint64_t seed) {
  CHASE_REQUIRE(image.c == 1, "augment expects a single-channel slice");
  if (mask) CHASE_REQUIRE(mask->h == image.h && mask->w == image.w, "mask not aligned with image");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * U(rng); };

  const double angle = uni(params.min_rotation_deg, params.max_rotation_deg) * std::numbers::pi / 180.0;
  const double scale = uni(params.min_scale, params.max_scale);
  const double gamma = uni(params.min_gamma, params.max_gamma);
  const int g = std::max(2, params.elastic_grid);
  std::vector<double> gdy(static_cast<std::size_t>(g) * g), gdx(gdy.size());
  for (std::size_t i = 0; i < gdy.size(); ++i) {
    gdy[i] = uni(-params.elastic_alpha, params.elastic_alpha);
    gdx[i] = uni(-params.elastic_alpha, params.elastic_alpha);
  }
  const bool elastic = params.elastic_alpha != 0.0;

  const int H = image.h, W = image.w;
  const double cy = (H - 1) * 0.5, cx = (W - 1) * 0.5;
  const double ca = std::cos(angle), sa = std::sin(angle);

  // Control-grid displacement, bilinearly interpolated over the image.
  auto displacement = [&](double y, double x, double& dy, double& dx) {
    const double gy = H > 1 ? y / (H - 1) * (g - 1) : 0.0;
    const double gx = W > 1 ? x / (W - 1) * (g - 1) : 0.0;
    const int y0 = std::min(static_cast<int>(gy), g - 2), x0 = std::min(static_cast<int>(gx), g - 2);
    const double ty = gy - y0, tx = gx - x0;
    auto at = [&](const std::vector<double>& f, int yy, int xx) { return f[static_cast<std::size_t>(yy) * g + xx]; };
    auto interp = [&](const std::vector<double>& f) {
      return (1 - ty) * ((1 - tx) * at(f, y0, x0) + tx * at(f, y0, x0 + 1)) +
             ty * ((1 - tx) * at(f, y0 + 1, x0) + tx * at(f, y0 + 1, x0 + 1));
    };
    dy = interp(gdy);
    dx = interp(gdx);
  };

  AugmentedSlice out;
  out.image = Tensor(1, H, W);
  if (mask) out.mask = LabelImage(H, W);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      // Inverse map: output pixel -> source coordinate.
      const double oy = (y - cy) / scale, ox = (x - cx) / scale;
      double sy = cy + ca * oy + sa * ox;
      double sx = cx - sa * oy + ca * ox;
      if (elastic) {
        double ddy, ddx;
        displacement(y, x, ddy, ddx);
        sy += ddy;
        sx += ddx;
      }
      sy = std::clamp(sy, 0.0, static_cast<double>(H - 1));
      sx = std::clamp(sx, 0.0, static_cast<double>(W - 1));
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, H - 1), x1 = std::min(x0 + 1, W - 1);
      const double ty = sy - y0, tx = sx - x0;
      double v = (1 - ty) * ((1 - tx) * image(0, y0, x0) + tx * image(0, y0, x1)) +
                 ty * ((1 - tx) * image(0, y1, x0) + tx * image(0, y1, x1));
      if (gamma != 1.0) v = std::pow(std::max(v, 0.0), gamma);
      out.image(0, y, x) = v;
      if (mask) {
        const int ny = std::clamp(static_cast<int>(std::lround(sy)), 0, H - 1);
        const int nx = std::clamp(static_cast<int>(std::lround(sx)), 0, W - 1);
        (*out.mask)(y, x) = (*mask)(ny, nx);
      }
    }
  }
  return out;
}

}  // namespace chase
