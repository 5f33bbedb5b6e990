// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout: "MOEC" magic, u32 version, u32 config-JSON length +
// UTF-8 JSON, u32 tensor count, then per tensor u16 name length, name,
// u8 rank, u32 dims..., raw little-endian f64 row-major payload.

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "moelab/common.hpp"
#include "moelab/grad.hpp"
#include "moelab/model.hpp"

namespace moelab {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2))
    throw format_error("checkpoint: truncated file");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw format_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64_payload(std::ostream& os, const std::vector<double>& data) {
  static_assert(sizeof(double) == 8);
  // Little-endian host assumed (x86_64 / aarch64); bytes go out verbatim.
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * 8));
}

nlohmann::json config_json(const MoEModel& model) {
  nlohmann::json j;
  j["vocab_size"] = model.config.vocab_size;
  j["d_model"] = model.config.d_model;
  j["d_ff"] = model.config.d_ff;
  j["n_layers"] = model.config.n_layers;
  j["n_experts"] = model.config.n_experts;
  j["top_k"] = model.config.top_k;
  j["seed"] = model.config.seed;
  std::vector<std::size_t> layer_experts, layer_top_k;
  for (const MoELayer& l : model.layers) {
    layer_experts.push_back(l.n_experts());
    layer_top_k.push_back(l.top_k);
  }
  j["layer_experts"] = layer_experts;
  j["layer_top_k"] = layer_top_k;
  return j;
}

}  // namespace

void save_checkpoint(const MoEModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);

  os.write(kMagic, 4);
  write_u32(os, kVersion);
  std::string cfg = config_json(model).dump();
  write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  os.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

  auto tensors = named_tensors(model);
  write_u32(os, static_cast<std::uint32_t>(tensors.size()));
  for (auto& [name, m] : tensors) {
    write_u16(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(static_cast<char>(2));  // rank
    write_u32(os, static_cast<std::uint32_t>(m->rows));
    write_u32(os, static_cast<std::uint32_t>(m->cols));
    write_f64_payload(os, m->data);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

MoEModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw format_error("checkpoint: cannot open " + path);

  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw format_error("checkpoint: bad magic bytes");
  std::uint32_t version = read_u32(is);
  if (version != kVersion)
    throw format_error("checkpoint: unsupported version " +
                       std::to_string(version));

  std::uint32_t cfg_len = read_u32(is);
  std::string cfg_str(cfg_len, '\0');
  if (!is.read(cfg_str.data(), cfg_len))
    throw format_error("checkpoint: truncated config");
  nlohmann::json j = nlohmann::json::parse(cfg_str, nullptr, false);
  if (j.is_discarded()) throw format_error("checkpoint: invalid config JSON");

  MoEModel model;
  try {
    model.config.vocab_size = j.at("vocab_size").get<std::size_t>();
    model.config.d_model = j.at("d_model").get<std::size_t>();
    model.config.d_ff = j.at("d_ff").get<std::size_t>();
    model.config.n_layers = j.at("n_layers").get<std::size_t>();
    model.config.n_experts = j.at("n_experts").get<std::size_t>();
    model.config.top_k = j.at("top_k").get<std::size_t>();
    model.config.seed = j.at("seed").get<std::uint64_t>();
    auto layer_experts = j.at("layer_experts").get<std::vector<std::size_t>>();
    auto layer_top_k = j.at("layer_top_k").get<std::vector<std::size_t>>();
    if (layer_experts.size() != model.config.n_layers ||
        layer_top_k.size() != model.config.n_layers)
      throw format_error("checkpoint: layer metadata length mismatch");
    model.layers.resize(model.config.n_layers);
    for (std::size_t l = 0; l < model.config.n_layers; ++l) {
      model.layers[l].experts.resize(layer_experts[l]);
      model.layers[l].top_k = layer_top_k[l];
    }
  } catch (const nlohmann::json::exception&) {
    throw format_error("checkpoint: config JSON missing required field");
  }

  std::uint32_t count = read_u32(is);
  std::map<std::string, Matrix> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t name_len = read_u16(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw format_error("checkpoint: truncated tensor name");
    int rank = is.get();
    if (rank != 2) throw format_error("checkpoint: unsupported tensor rank");
    std::uint32_t rows = read_u32(is);
    std::uint32_t cols = read_u32(is);
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data.data()),
                 static_cast<std::streamsize>(m.data.size() * 8)))
      throw format_error("checkpoint: truncated tensor data");
    loaded.emplace(std::move(name), std::move(m));
  }

  auto slots = named_tensors(model);
  if (slots.size() != loaded.size())
    throw format_error("checkpoint: tensor count mismatch");
  for (auto& [name, slot] : slots) {
    auto it = loaded.find(name);
    if (it == loaded.end())
      throw format_error("checkpoint: missing tensor " + name);
    *slot = std::move(it->second);
  }

  // Shape sanity: router rows must match expert counts.
  for (const MoELayer& l : model.layers)
    if (l.router.rows != l.n_experts())
      throw format_error("checkpoint: router/expert shape mismatch");
  return model;
}

}  // namespace moelab
