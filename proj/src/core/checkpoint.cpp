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

#include "core/checkpoint.hpp"

#include <fstream>
#include <json.hpp>
#include <utility>
#include <vector>

#include "core/error.hpp"

namespace chase {
namespace {

using nlohmann::json;
constexpr const char* kMagic = "chase-checkpoint";

struct Block {
  std::string name;
  std::size_t begin, end;  // range within `params`
  const std::vector<double>* params;
};

json backbone_json(const BackboneConfig& c) {
  return {{"channels", c.channels},
          {"pool", c.pool},
          {"convs_per_stage", c.convs_per_stage},
          {"height", c.height},
          {"width", c.width}};
}

BackboneConfig backbone_from(const json& j) {
  BackboneConfig c;
  c.channels = j.at("channels").get<decltype(c.channels)>();
  c.pool = j.at("pool").get<decltype(c.pool)>();
  c.convs_per_stage = j.at("convs_per_stage").get<int>();
  c.height = j.at("height").get<int>();
  c.width = j.at("width").get<int>();
  return c;
}

void write_file(const std::filesystem::path& path, json header, const std::vector<Block>& blocks) {
  json list = json::array();
  for (const Block& b : blocks) list.push_back({{"name", b.name}, {"count", b.end - b.begin}});
  header["version"] = kCheckpointVersion;
  header["blocks"] = list;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError(IoError::Kind::Unwritable, "cannot write " + path.string());
  os << kMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const Block& b : blocks) {
    os.write(reinterpret_cast<const char*>(b.params->data() + b.begin),
             static_cast<std::streamsize>((b.end - b.begin) * sizeof(double)));
  }
  if (!os) throw IoError(IoError::Kind::Unwritable, "write failed: " + path.string());
}

struct Loaded {
  json header;
  std::vector<std::pair<std::string, std::vector<double>>> blocks;

  const std::vector<double>& block(const std::string& name) const {
    for (const auto& [n, v] : blocks) {
      if (n == name) return v;
    }
    throw IoError(IoError::Kind::MalformedHeader, "checkpoint lacks block '" + name + "'");
  }
};

Loaded read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Kind::Unreadable, "cannot read " + path.string());
  std::string magic_line, header_line;
  std::getline(is, magic_line);
  const std::string expect = std::string(kMagic) + ' ' + std::to_string(kCheckpointVersion);
  if (magic_line != expect) {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": not a version " +
                                                      std::to_string(kCheckpointVersion) +
                                                      " checkpoint");
  }
  std::getline(is, header_line);
  Loaded out;
  try {
    out.header = json::parse(header_line);
    for (const auto& b : out.header.at("blocks")) {
      std::vector<double> v(b.at("count").get<std::size_t>());
      is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
      if (!is) throw IoError(IoError::Kind::SizeMismatch, path.string() + ": truncated payload");
      out.blocks.emplace_back(b.at("name").get<std::string>(), std::move(v));
    }
  } catch (const json::exception& e) {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": " + e.what());
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw IoError(IoError::Kind::SizeMismatch, path.string() + ": trailing bytes");
  }
  return out;
}

void copy_block(const Loaded& l, const std::string& name, std::vector<double>& params,
                std::size_t begin, std::size_t end) {
  const auto& v = l.block(name);
  if (v.size() != end - begin) {
    throw IoError(IoError::Kind::SizeMismatch, "block '" + name + "' has " +
                                                   std::to_string(v.size()) + " values, expected " +
                                                   std::to_string(end - begin));
  }
  std::copy(v.begin(), v.end(), params.begin() + static_cast<std::ptrdiff_t>(begin));
}

}  // namespace

void save_phnn(const std::filesystem::path& path, const PhnnNet& net, const std::string& config_text) {
  const auto& p = net.params();
  json h = {{"kind", "phnn"}, {"backbone", backbone_json(net.config())}, {"config", config_text}};
  write_file(path, h,
             {{"stem", net.stem().begin, net.stem().end, &p},
              {"trunk", net.trunk().begin, net.trunk().end, &p}});
}

PhnnNet load_phnn(const std::filesystem::path& path) {
  const Loaded l = read_file(path);
  if (l.header.value("kind", "") != "phnn") {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": not a single-phase checkpoint");
  }
  PhnnNet net(backbone_from(l.header.at("backbone")));
  copy_block(l, "stem", net.params(), net.stem().begin, net.stem().end);
  copy_block(l, "trunk", net.params(), net.trunk().begin, net.trunk().end);
  return net;
}

void save_cohetero(const std::filesystem::path& path, const CoHeteroNet& net,
                   const Discriminator* disc, long step, const std::string& config_text) {
  const auto& p = net.params();
  json h = {{"kind", "cohetero"},
            {"backbone", backbone_json(net.config())},
            {"step", step},
            {"config", config_text}};
  std::vector<Block> blocks;
  for (PhaseId ph : kAllPhases) {
    blocks.push_back({"stem." + std::string(phase_name(ph)), net.stem(ph).begin, net.stem(ph).end, &p});
  }
  blocks.push_back({"trunk", net.trunk().begin, net.trunk().end, &p});
  if (disc) {
    const auto& c = disc->config();
    h["discriminator"] = {{"width", c.width}, {"dilations", c.dilations}, {"negative_slope", c.negative_slope}};
    blocks.push_back({"disc", 0, disc->params().size(), &disc->params()});
  }
  write_file(path, h, blocks);
}

CoHeteroCheckpoint load_cohetero(const std::filesystem::path& path) {
  const Loaded l = read_file(path);
  if (l.header.value("kind", "") != "cohetero") {
    throw IoError(IoError::Kind::MalformedHeader, path.string() + ": not a co-hetero checkpoint");
  }
  CoHeteroCheckpoint ck{CoHeteroNet(backbone_from(l.header.at("backbone"))), std::nullopt,
                        l.header.value("step", 0L), l.header.value("config", std::string{})};
  for (PhaseId ph : kAllPhases) {
    copy_block(l, "stem." + std::string(phase_name(ph)), ck.net.params(), ck.net.stem(ph).begin,
               ck.net.stem(ph).end);
  }
  copy_block(l, "trunk", ck.net.params(), ck.net.trunk().begin, ck.net.trunk().end);
  if (l.header.contains("discriminator")) {
    const json& d = l.header["discriminator"];
    DiscriminatorConfig c;
    c.width = d.at("width").get<int>();
    c.dilations = d.at("dilations").get<decltype(c.dilations)>();
    c.negative_slope = d.at("negative_slope").get<double>();
    ck.disc.emplace(c);
    copy_block(l, "disc", ck.disc->params(), 0, ck.disc->params().size());
  }
  return ck;
}

ModelKind checkpoint_kind(const std::filesystem::path& path) {
  const Loaded l = read_file(path);
  const std::string k = l.header.value("kind", "");
  if (k == "phnn") return ModelKind::Phnn;
  if (k == "cohetero") return ModelKind::CoHetero;
  throw IoError(IoError::Kind::MalformedHeader, path.string() + ": unknown model kind '" + k + "'");
}

}  // namespace chase
