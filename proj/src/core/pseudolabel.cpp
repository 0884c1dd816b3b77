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

#include "core/pseudolabel.hpp"

#include <algorithm>
#include <map>

#include "core/error.hpp"
#include "core/volume_io.hpp"

namespace chase {

BinaryMask extract_holes(const BinaryMask& region, int min_size) {
  const int D = region.d, H = region.h, W = region.w;
  BinaryMask holes(D, H, W, 0);
  std::vector<std::uint8_t> seen(region.size(), 0);
  std::vector<std::size_t> stack, component;
  for (std::size_t start = 0; start < region.size(); ++start) {
    if (region.data[start] || seen[start]) continue;
    bool border = false;
    component.clear();
    stack.assign(1, start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      component.push_back(i);
      const int x = static_cast<int>(i % W);
      const int y = static_cast<int>((i / W) % H);
      const int z = static_cast<int>(i / (static_cast<std::size_t>(W) * H));
      if (x == 0 || y == 0 || z == 0 || x == W - 1 || y == H - 1 || z == D - 1) border = true;
      const int nb[6][3] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
      for (const auto& o : nb) {
        const int zz = z + o[0], yy = y + o[1], xx = x + o[2];
        if (zz < 0 || yy < 0 || xx < 0 || zz >= D || yy >= H || xx >= W) continue;
        const std::size_t j = region.index(zz, yy, xx);
        if (region.data[j] || seen[j]) continue;
        seen[j] = 1;
        stack.push_back(j);
      }
    }
    if (border || static_cast<int>(component.size()) <= min_size) continue;
    for (std::size_t i : component) holes.data[i] = 1;
  }
  return holes;
}

std::optional<Study> holes_study(const Study& study, const LabelMask& pred, int min_size,
                                int* hole_voxels) {
  const BinaryMask holes = extract_holes(liver_region(pred), min_size);
  const auto n = static_cast<int>(std::count(holes.data.begin(), holes.data.end(), 1));
  if (hole_voxels) *hole_voxels = n;
  if (n == 0) return std::nullopt;
  Study h;
  h.id = study.id;
  h.domain = study.domain;
  h.phases = study.phases;
  h.tace = study.tace;
  LabelMask pseudo;
  pseudo.spacing = pred.spacing;
  pseudo.labels = Grid3<std::uint8_t>(holes.d, holes.h, holes.w, kIgnore);
  for (std::size_t i = 0; i < holes.size(); ++i) {
    if (holes.data[i]) pseudo.labels.data[i] = kLesion;
  }
  h.mask = std::move(pseudo);
  return h;
}

HolesDataset build_holes_dataset(const CoHeteroNet& net, std::span<const Study> unlabeled,
                                 int min_size) {
  HolesDataset out;
  for (const Study& s : unlabeled) {
    const LabelMask pred = predict_volume(net, s, ViewCombo::of(s.available_phases()));
    int n = 0;
    if (auto h = holes_study(s, pred, min_size, &n)) {
      out.studies.push_back(std::move(*h));
      out.hole_voxels.push_back(n);
    }
  }
  return out;
}

void save_holes_dataset(const HolesDataset& holes, const std::filesystem::path& data_dir,
                        const std::filesystem::path& holes_dir) {
  namespace fs = std::filesystem;
  std::map<std::string, ManifestRecord> source;
  for (ManifestRecord& r : read_manifest(data_dir / "manifest.tsv")) source.emplace(r.id, std::move(r));
  fs::create_directories(holes_dir / "masks");
  const fs::path base = fs::absolute(holes_dir);
  std::vector<ManifestRecord> records;
  for (const Study& s : holes.studies) {
    const auto it = source.find(s.id);
    if (it == source.end()) {
      throw IoError(IoError::Kind::MalformedHeader, "study " + s.id + " is not in " + data_dir.string());
    }
    ManifestRecord r;
    r.id = s.id;
    r.domain = Domain::Target;
    r.split = Split::Holes;
    r.tace = s.tace;
    r.phases = it->second.phases;
    for (const std::string& f : it->second.files) {
      r.files.push_back(fs::relative(fs::absolute(data_dir / f), base).generic_string());
    }
    r.mask = "masks/" + s.id + "_holes.raw";
    write_volume(holes_dir / r.mask, *s.mask);
    records.push_back(std::move(r));
  }
  write_manifest(holes_dir / "manifest.tsv", records);
}

HolesDataset load_holes_dataset(const std::filesystem::path& holes_dir) {
  HolesDataset out;
  for (const ManifestRecord& r : read_manifest(holes_dir / "manifest.tsv")) {
    if (r.split != Split::Holes) continue;
    Study s = load_study(holes_dir, r);
    CHASE_REQUIRE(s.mask.has_value(), "holes record " + r.id + " lacks a pseudo mask");
    const auto& v = s.mask->labels.data;
    out.hole_voxels.push_back(static_cast<int>(std::count(v.begin(), v.end(), kLesion)));
    out.studies.push_back(std::move(s));
  }
  return out;
}

double holes_seg_loss(const CoHeteroNet& net, std::span<const HolesSlice> batch,
                      const ClassWeights& weights, std::span<double> grad, double scale) {
  std::size_t terms = 0;
  for (const HolesSlice& item : batch) terms += item.combos.size();
  if (terms == 0) return 0.0;
  const double inv = 1.0 / static_cast<double>(terms);
  double total = 0.0;
  for (const HolesSlice& item : batch) {
    if (item.combos.empty()) continue;
    const CoHeteroNet::Pass pass = net.forward_views(item.images, item.combos);
    std::vector<StageGrads> g(pass.views.size());
    for (std::size_t v = 0; v < pass.views.size(); ++v) {
      total += staged_seg_loss(pass.views[v].out, item.pseudo, weights,
                               grad.empty() ? nullptr : &g[v], scale * inv);
    }
    if (!grad.empty()) net.backward_views(pass, g, grad);
  }
  return total * inv;
}

PseudoSegLoss seg_loss_with_pseudo(const CoHeteroNet& net, std::span<const LabeledSlice> labeled,
                                   std::span<const HolesSlice> holes, const ClassWeights& weights,
                                   double lambda_h, std::span<double> grad) {
  PseudoSegLoss r;
  r.labeled = labeled_seg_loss(net, labeled, weights, grad);
  if (lambda_h != 0.0 && !holes.empty()) {
    r.holes = holes_seg_loss(net, holes, weights, grad, lambda_h);
  }
  r.total = r.labeled + lambda_h * r.holes;
  return r;
}

}  // namespace chase
