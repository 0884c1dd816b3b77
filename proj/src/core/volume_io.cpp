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

#include "core/volume_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace chase {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "volume payloads are written in native order; big-endian hosts need byte swapping");

namespace {

constexpr const char* kMagic = "chase-volume";
constexpr int kVersion = 1;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Header {
  std::string dtype;
  int d = 0, h = 0, w = 0;
  Spacing spacing;
  std::string labels;
};

void write_header(const fs::path& payload, const Header& hd) {
  std::ofstream os(header_path(payload));
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + header_path(payload).string());
  os << kMagic << ' ' << kVersion << '\n'
     << "dtype " << hd.dtype << '\n'
     << "shape " << hd.d << ' ' << hd.h << ' ' << hd.w << '\n'
     << "spacing " << fmt_double(hd.spacing.z) << ' ' << fmt_double(hd.spacing.y) << ' '
     << fmt_double(hd.spacing.x) << '\n'
     << "labels " << hd.labels << '\n';
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + header_path(payload).string());
}

Header read_header(const fs::path& payload) {
  std::ifstream is(header_path(payload));
  if (!is) throw IoError(IoError::Kind::Unreadable, "cannot read " + header_path(payload).string());
  auto bad = [&](const std::string& why) {
    return IoError(IoError::Kind::MalformedHeader, header_path(payload).string() + ": " + why);
  };
  std::string magic;
  int version = 0;
  if (!(is >> magic >> version) || magic != kMagic) throw bad("missing magic line");
  if (version != kVersion) throw bad("unsupported version " + std::to_string(version));
  Header hd;
  bool have_dtype = false, have_shape = false, have_spacing = false;
  std::string key;
  while (is >> key) {
    if (key == "dtype") {
      if (!(is >> hd.dtype)) throw bad("bad dtype");
      have_dtype = true;
    } else if (key == "shape") {
      if (!(is >> hd.d >> hd.h >> hd.w)) throw bad("bad shape");
      have_shape = true;
    } else if (key == "spacing") {
      if (!(is >> hd.spacing.z >> hd.spacing.y >> hd.spacing.x)) throw bad("bad spacing");
      have_spacing = true;
    } else if (key == "labels") {
      if (!(is >> hd.labels)) throw bad("bad labels");
    } else {
      throw bad("unknown key '" + key + "'");
    }
  }
  if (!have_dtype || !have_shape || !have_spacing) throw bad("incomplete header");
  if (hd.dtype != "float32" && hd.dtype != "uint8") throw bad("unsupported dtype " + hd.dtype);
  if (hd.d < 1 || hd.h < 1 || hd.w < 1) throw bad("non-positive dimension");
  if (!(hd.spacing.z > 0 && hd.spacing.y > 0 && hd.spacing.x > 0)) throw bad("non-positive spacing");
  return hd;
}

template <class T>
void write_payload(const fs::path& path, const std::vector<T>& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(T)));
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + path.string());
}

template <class T>
std::vector<T> read_payload(const fs::path& path, std::size_t expected) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError(IoError::Kind::Unreadable, "cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(is.tellg());
  if (bytes != expected * sizeof(T)) {
    throw IoError(IoError::Kind::SizeMismatch,
                  path.string() + ": payload has " + std::to_string(bytes) + " bytes, header implies " +
                      std::to_string(expected * sizeof(T)));
  }
  is.seekg(0);
  std::vector<T> data(expected);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
  if (!is) throw IoError(IoError::Kind::Unreadable, "short read: " + path.string());
  return data;
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

}  // namespace

fs::path header_path(const fs::path& payload) {
  return fs::path(payload.string() + ".hdr");
}

void write_volume(const fs::path& path, const Volume& v) {
  write_header(path, {"float32", v.voxels.d, v.voxels.h, v.voxels.w, v.spacing, "none"});
  write_payload(path, v.voxels.data);
}

void write_volume(const fs::path& path, const LabelMask& m) {
  write_header(path, {"uint8", m.labels.d, m.labels.h, m.labels.w, m.spacing,
                      "0=background,1=liver,2=lesion,255=ignore"});
  write_payload(path, m.labels.data);
}

std::variant<Volume, LabelMask> read_volume(const fs::path& path) {
  const Header hd = read_header(path);
  const std::size_t n = static_cast<std::size_t>(hd.d) * hd.h * hd.w;
  if (hd.dtype == "float32") {
    Volume v;
    v.spacing = hd.spacing;
    v.voxels.d = hd.d;
    v.voxels.h = hd.h;
    v.voxels.w = hd.w;
    v.voxels.data = read_payload<float>(path, n);
    return v;
  }
  LabelMask m;
  m.spacing = hd.spacing;
  m.labels.d = hd.d;
  m.labels.h = hd.h;
  m.labels.w = hd.w;
  m.labels.data = read_payload<std::uint8_t>(path, n);
  return m;
}

Volume read_image(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* img = std::get_if<Volume>(&v)) return std::move(*img);
  throw IoError(IoError::Kind::MalformedHeader, path.string() + ": expected float32 volume");
}

LabelMask read_labels(const fs::path& path) {
  auto v = read_volume(path);
  if (auto* m = std::get_if<LabelMask>(&v)) return std::move(*m);
  throw IoError(IoError::Kind::MalformedHeader, path.string() + ": expected uint8 label volume");
}

void write_manifest(const fs::path& path, const std::vector<ManifestRecord>& records) {
  std::ofstream os(path);
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + path.string());
  os << "#id\tdomain\tsplit\tphases\tfiles\tmask\ttruth\ttags\n";
  for (const ManifestRecord& r : records) {
    std::vector<std::string> phases;
    for (PhaseId p : r.phases) phases.emplace_back(phase_name(p));
    os << r.id << '\t' << domain_name(r.domain) << '\t' << split_name(r.split) << '\t'
       << join(phases, ',') << '\t' << join(r.files, ',') << '\t'
       << (r.mask.empty() ? "-" : r.mask) << '\t' << (r.truth.empty() ? "-" : r.truth) << '\t'
       << (r.tace ? "tace" : "-") << '\n';
  }
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + path.string());
}

std::vector<ManifestRecord> read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError(IoError::Kind::Unreadable, "cannot read " + path.string());
  std::vector<ManifestRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto cols = split(line, '\t');
    if (cols.size() != 8) {
      throw IoError(IoError::Kind::MalformedHeader,
                    path.string() + ":" + std::to_string(lineno) + ": expected 8 columns");
    }
    ManifestRecord r;
    r.id = cols[0];
    if (cols[1] == "source") r.domain = Domain::Source;
    else if (cols[1] == "target") r.domain = Domain::Target;
    else throw IoError(IoError::Kind::MalformedHeader, "bad domain '" + cols[1] + "'");
    r.split = parse_split(cols[2]);
    for (const auto& p : split(cols[3], ',')) r.phases.push_back(parse_phase(p));
    r.files = split(cols[4], ',');
    if (r.files.size() != r.phases.size()) {
      throw IoError(IoError::Kind::MalformedHeader, "phase/file count mismatch for " + r.id);
    }
    r.mask = cols[5] == "-" ? "" : cols[5];
    r.truth = cols[6] == "-" ? "" : cols[6];
    r.tace = cols[7] == "tace";
    out.push_back(std::move(r));
  }
  return out;
}

Study load_study(const fs::path& dir, const ManifestRecord& rec) {
  Study s;
  s.id = rec.id;
  s.domain = rec.domain;
  s.tace = rec.tace;
  for (std::size_t i = 0; i < rec.phases.size(); ++i) {
    s.phases.emplace(rec.phases[i], read_image(dir / rec.files[i]));
  }
  if (!rec.mask.empty()) s.mask = read_labels(dir / rec.mask);
  s.validate();
  return s;
}

void save_datasets(const Datasets& ds, const fs::path& dir) {
  fs::create_directories(dir / "volumes");
  fs::create_directories(dir / "masks");
  std::vector<ManifestRecord> records;
  auto add = [&](const Study& s, Split split, const LabelMask* truth) {
    ManifestRecord r;
    r.id = s.id;
    r.domain = s.domain;
    r.split = split;
    r.tace = s.tace;
    for (const auto& [p, v] : s.phases) {
      const std::string rel = "volumes/" + s.id + "_" + std::string(phase_name(p)) + ".raw";
      write_volume(dir / rel, v);
      r.phases.push_back(p);
      r.files.push_back(rel);
    }
    if (s.mask) {
      r.mask = "masks/" + s.id + ".raw";
      write_volume(dir / r.mask, *s.mask);
    }
    if (truth) {
      r.truth = "masks/" + s.id + "_truth.raw";
      write_volume(dir / r.truth, *truth);
    }
    records.push_back(std::move(r));
  };
  for (const auto& s : ds.labeled) add(s, Split::Train, nullptr);
  for (const auto& s : ds.source_val) add(s, Split::Val, nullptr);
  for (const auto& s : ds.source_test) add(s, Split::Test, nullptr);
  for (const auto& s : ds.unlabeled) {
    auto it = ds.unlabeled_truth.find(s.id);
    add(s, Split::Unlabeled, it == ds.unlabeled_truth.end() ? nullptr : &it->second);
  }
  for (const auto& s : ds.target_val) add(s, Split::Val, nullptr);
  for (const auto& s : ds.target_test) add(s, Split::Test, nullptr);
  write_manifest(dir / "manifest.tsv", records);
}

Datasets load_datasets(const fs::path& dir) {
  Datasets ds;
  for (const ManifestRecord& r : read_manifest(dir / "manifest.tsv")) {
    Study s = load_study(dir, r);
    if (r.domain == Domain::Source) {
      switch (r.split) {
        case Split::Train: ds.labeled.push_back(std::move(s)); break;
        case Split::Val: ds.source_val.push_back(std::move(s)); break;
        case Split::Test: ds.source_test.push_back(std::move(s)); break;
        default: throw IoError(IoError::Kind::MalformedHeader, "bad source split for " + r.id);
      }
    } else {
      switch (r.split) {
        case Split::Unlabeled:
          if (!r.truth.empty()) ds.unlabeled_truth.emplace(r.id, read_labels(dir / r.truth));
          ds.unlabeled.push_back(std::move(s));
          break;
        case Split::Val: ds.target_val.push_back(std::move(s)); break;
        case Split::Test: ds.target_test.push_back(std::move(s)); break;
        case Split::Holes: break;  // pseudo-label records live in a separate manifest
        default: throw IoError(IoError::Kind::MalformedHeader, "bad target split for " + r.id);
      }
    }
  }
  return ds;
}

}  // namespace chase
