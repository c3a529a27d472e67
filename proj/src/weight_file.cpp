// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

#include "xflow/weight_file.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "xflow/error.hpp"

namespace xflow {
namespace {

static_assert(std::endian::native == std::endian::little, "XFLW I/O assumes a little-endian host");

constexpr char kMagic[4] = {'X', 'F', 'L', 'W'};
constexpr std::size_t kHeaderBytes = 4 + 4 + 8;

struct TensorRef {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  float* data;
};

// Tensors in file order. Norm gains are stored as 1×d rows.
std::vector<TensorRef> tensors_of(ModelWeights& w) {
  std::vector<TensorRef> out;
  auto add = [&](std::string name, Matrix& m) { out.push_back({std::move(name), m.rows(), m.cols(), m.data().data()}); };
  auto add_vec = [&](std::string name, std::vector<float>& v) {
    out.push_back({std::move(name), 1, v.size(), v.data()});
  };
  add("token_embedding", w.token_embedding);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& L = w.layers[l];
    const std::string p = "layers." + std::to_string(l) + ".";
    add(p + "wq", L.wq);
    add(p + "wk", L.wk);
    add(p + "wv", L.wv);
    add(p + "wo", L.wo);
    add(p + "ffn_in", L.ffn_in);
    add(p + "ffn_out", L.ffn_out);
    if (w.config.use_norm) {
      add_vec(p + "attn_norm", L.attn_norm);
      add_vec(p + "ffn_norm", L.ffn_norm);
    }
  }
  if (w.config.use_norm) add_vec("final_norm", w.final_norm);
  add("unembedding", w.unembedding);
  return out;
}

template <class T>
void put(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

template <class T>
T get(const std::vector<std::uint8_t>& in, std::size_t at) {
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  return v;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelWeights& weights, const Json& metadata) {
  weights.validate();
  ModelWeights copy = weights;
  auto refs = tensors_of(copy);

  Json records = Json::array();
  std::size_t offset = 0;
  for (const auto& t : refs) {
    records.push_back(Json{{"name", t.name}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
    offset += t.rows * t.cols * sizeof(float);
  }
  Json manifest{{"config", to_json(weights.config)}, {"tensors", records}, {"payload_bytes", offset}};
  if (!metadata.is_null()) manifest["metadata"] = metadata;
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put<std::uint32_t>(out, kWeightFormatVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t payload_at = out.size();
  for (const auto& t : refs) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data);
    out.insert(out.end(), p, p + t.rows * t.cols * sizeof(float));
  }
  put<std::uint32_t>(out, crc_of(out.data() + payload_at, out.size() - payload_at));
  return out;
}

LoadedModel decode_model(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kHeaderBytes) throw TruncationError("file shorter than the XFLW header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("missing XFLW magic");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kWeightFormatVersion) {
    throw VersionError("unsupported XFLW version " + std::to_string(version) + " (expected " +
                       std::to_string(kWeightFormatVersion) + ")");
  }
  const auto manifest_len = get<std::uint64_t>(bytes, 8);
  if (manifest_len > bytes.size() - kHeaderBytes) throw TruncationError("manifest runs past the end of the file");

  Json manifest;
  try {
    manifest = Json::parse(bytes.begin() + kHeaderBytes,
                           bytes.begin() + static_cast<std::ptrdiff_t>(kHeaderBytes + manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("unreadable manifest: ") + e.what());
  }

  LoadedModel out;
  std::uint64_t payload_bytes = 0;
  Json records;
  try {
    out.weights = zero_weights(config_from_json(manifest.at("config"), "manifest.config"));
    payload_bytes = manifest.at("payload_bytes").get<std::uint64_t>();
    records = manifest.at("tensors");
    if (manifest.contains("metadata")) out.metadata = manifest["metadata"];
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("bad manifest: ") + e.what());
  }

  const std::size_t payload_at = kHeaderBytes + manifest_len;
  const std::size_t available = bytes.size() - payload_at;

  auto refs = tensors_of(out.weights);
  if (!records.is_array() || records.size() != refs.size()) {
    throw FormatError("manifest lists " + std::to_string(records.size()) + " tensors, config implies " +
                      std::to_string(refs.size()));
  }
  std::size_t expect_offset = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = refs[i];
    std::string name;
    std::size_t rows = 0, cols = 0, offset = 0;
    try {
      name = records[i].at("name").get<std::string>();
      rows = records[i].at("shape").at(0).get<std::size_t>();
      cols = records[i].at("shape").at(1).get<std::size_t>();
      offset = records[i].at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad tensor record " + std::to_string(i) + ": " + e.what());
    }
    if (name != t.name || rows != t.rows || cols != t.cols) {
      throw FormatError("tensor record " + std::to_string(i) + " (" + name + ") does not match the config");
    }
    const std::size_t len = rows * cols * sizeof(float);
    if (offset + len > available) throw TruncationError("tensor " + name + " extends past the end of the file");
    if (offset != expect_offset) throw FormatError("tensor " + name + " overlaps or leaves a gap");
    if (offset + len > payload_bytes) throw FormatError("tensor " + name + " lies outside payload_bytes");
    expect_offset += len;
  }
  if (expect_offset != payload_bytes) throw FormatError("payload_bytes disagrees with the tensor records");
  if (available < payload_bytes + 4) throw TruncationError("file ends before the payload checksum");
  if (available > payload_bytes + 4) throw FormatError("trailing bytes after the payload checksum");

  const std::uint32_t stored = get<std::uint32_t>(bytes, payload_at + payload_bytes);
  if (crc_of(bytes.data() + payload_at, payload_bytes) != stored) throw ChecksumError("payload CRC-32 mismatch");

  for (std::size_t i = 0; i < refs.size(); ++i) {
    const std::size_t offset = records[i]["offset"].get<std::size_t>();
    std::memcpy(refs[i].data, bytes.data() + payload_at + offset, refs[i].rows * refs[i].cols * sizeof(float));
  }
  try {
    out.weights.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("decoded weights are invalid: ") + e.what());
  }
  return out;
}

void save_model(const ModelWeights& weights, const std::filesystem::path& path, const Json& metadata) {
  const auto bytes = encode_model(weights, metadata);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing " + path.string());
}

LoadedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_model(bytes);
}

}  // namespace xflow
