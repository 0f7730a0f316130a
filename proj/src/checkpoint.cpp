// Copyright 2026 The hybrid-avsr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "avsr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "avsr/error.hpp"
#include "json.hpp"

namespace avsr {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', 'V', 'S', 'R', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ConfigError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

json encoder_json(const EncoderConfig& c) {
  return {{"topology", c.topology == EncoderTopology::early_fusion ? "early_fusion" : "single"},
          {"input_dim", c.input_dim},
          {"visual_dim", c.visual_dim},
          {"hidden", c.hidden},
          {"layers", c.layers}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  const std::string topo = j.at("topology").get<std::string>();
  if (topo == "early_fusion") {
    c.topology = EncoderTopology::early_fusion;
  } else if (topo == "single") {
    c.topology = EncoderTopology::single_stream;
  } else {
    throw ConfigError("unknown encoder topology '" + topo + "'");
  }
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.visual_dim = j.at("visual_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  return c;
}

json decoder_json(const DecoderConfig& c) {
  return {{"embed_dim", c.embed_dim},         {"hidden", c.hidden},
          {"attention_dim", c.attention_dim}, {"conv_channels", c.conv_channels},
          {"conv_width", c.conv_width}};
}

DecoderConfig decoder_from_json(const json& j) {
  DecoderConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.attention_dim = j.at("attention_dim").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.conv_width = j.at("conv_width").get<std::size_t>();
  return c;
}

template <typename Params>
std::string pack(const std::string& kind, const Alphabet& alphabet, json config,
                 const CheckpointTags& tags, const Params& params) {
  json table = json::array();
  std::string payload;
  params.for_each_param([&](const std::string& name, const Matrix& m) {
    table.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (double v : m.values()) put(payload, v);
  });
  json meta = {{"kind", kind},
               {"alphabet", alphabet.symbols()},
               {"config", std::move(config)},
               {"tags", tags},
               {"tensors", std::move(table)}};
  const std::string text = meta.dump();
  std::string out(kMagic, sizeof(kMagic));
  put(out, kCheckpointVersion);
  put(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

json unpack_header(const std::string& bytes, const std::string& kind, std::size_t& pos) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ConfigError("not a checkpoint (bad magic)");
  }
  pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw ConfigError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = take<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw ConfigError("checkpoint truncated");
  json meta;
  try {
    meta = json::parse(bytes.substr(pos, len));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("corrupt checkpoint metadata: ") + e.what());
  }
  pos += len;
  const std::string found = meta.at("kind").get<std::string>();
  if (found != kind) {
    throw ConfigError("checkpoint holds a '" + found + "' but a '" + kind + "' was expected");
  }
  return meta;
}

template <typename Params>
void fill_tensors(const json& meta, const std::string& bytes, std::size_t pos, Params& params,
                  CheckpointTags* tags) {
  const json& table = meta.at("tensors");
  std::size_t index = 0;
  params.for_each_param([&](const std::string& name, Matrix& m) {
    if (index >= table.size()) throw ConfigError("checkpoint lacks tensor " + name);
    const json& entry = table[index++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<std::size_t>() != m.rows() ||
        entry.at("cols").get<std::size_t>() != m.cols()) {
      throw ConfigError("checkpoint tensor " + entry.at("name").get<std::string>() +
                        " does not match architecture (expected " + name + ")");
    }
    for (double& v : m.values()) v = take<double>(bytes, pos);
  });
  if (index != table.size() || pos != bytes.size()) {
    throw ConfigError("checkpoint has trailing tensors or bytes");
  }
  if (tags) *tags = meta.at("tags").get<CheckpointTags>();
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_all(const std::filesystem::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string serialize_model(const HybridModel& model, const CheckpointTags& tags) {
  json config = {{"encoder", encoder_json(model.encoder.config)},
                 {"decoder", decoder_json(model.decoder.config)}};
  return pack("hybrid", model.alphabet, std::move(config), tags, model);
}

HybridModel deserialize_model(const std::string& bytes, CheckpointTags* tags) {
  std::size_t pos = 0;
  const json meta = unpack_header(bytes, "hybrid", pos);
  const json& config = meta.at("config");
  HybridModel model = make_hybrid_model(Alphabet(meta.at("alphabet").get<std::string>()),
                                        encoder_from_json(config.at("encoder")),
                                        decoder_from_json(config.at("decoder")), 0);
  fill_tensors(meta, bytes, pos, model, tags);
  return model;
}

std::string serialize_lm(const LmParams& lm, const CheckpointTags& tags) {
  json config = {{"embed_dim", lm.config.embed_dim}, {"hidden", lm.config.hidden}};
  return pack("lm", lm.alphabet, std::move(config), tags, lm);
}

LmParams deserialize_lm(const std::string& bytes, CheckpointTags* tags) {
  std::size_t pos = 0;
  const json meta = unpack_header(bytes, "lm", pos);
  LmConfig config;
  config.embed_dim = meta.at("config").at("embed_dim").get<std::size_t>();
  config.hidden = meta.at("config").at("hidden").get<std::size_t>();
  LmParams lm = make_lm(Alphabet(meta.at("alphabet").get<std::string>()), config, 0);
  fill_tensors(meta, bytes, pos, lm, tags);
  return lm;
}

void save_model(const std::filesystem::path& path, const HybridModel& model,
                const CheckpointTags& tags) {
  write_all(path, serialize_model(model, tags));
}

HybridModel load_model(const std::filesystem::path& path, CheckpointTags* tags) {
  return deserialize_model(read_all(path), tags);
}

void save_lm(const std::filesystem::path& path, const LmParams& lm, const CheckpointTags& tags) {
  write_all(path, serialize_lm(lm, tags));
}

LmParams load_lm(const std::filesystem::path& path, CheckpointTags* tags) {
  return deserialize_lm(read_all(path), tags);
}

std::uint64_t fingerprint(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace avsr
