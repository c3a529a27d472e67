// Copyright 2026 The xflow Authors
// SPDX-License-Identifier: Apache-2.0

// XFLW weight container:
//
//   "XFLW" | u32 version | u64 manifest bytes | manifest JSON | payload | u32 CRC-32
//
// All integers little-endian. The manifest holds the model config, optional
// metadata, and one record {name, shape, offset} per tensor, where offset is
// the byte offset of the tensor inside the payload. The payload is raw
// little-endian float32 and the CRC covers the payload only.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xflow/json_io.hpp"
#include "xflow/model.hpp"

namespace xflow {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

struct LoadedModel {
  ModelWeights weights;
  Json metadata;  // null when the file carries none
};

/// Serialized bytes; `metadata` is stored verbatim in the manifest.
std::vector<std::uint8_t> encode_model(const ModelWeights& weights, const Json& metadata = nullptr);

/// Throws FormatError, VersionError, TruncationError or ChecksumError.
LoadedModel decode_model(const std::vector<std::uint8_t>& bytes);

void save_model(const ModelWeights& weights, const std::filesystem::path& path, const Json& metadata = nullptr);
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace xflow
