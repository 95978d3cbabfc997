#pragma once

#include <filesystem>

#include "loramix/lora.hpp"
#include "loramix/model.hpp"
#include "loramix/router.hpp"

namespace loramix {

// Container layout (all integers little-endian):
//   "LTLE" magic | u16 format version | u32 header length |
//   UTF-8 JSON header (name, kind, rank/alpha where relevant, ordered
//   tensor manifest of role/rows/cols) | raw float32 payloads in manifest
//   order | u32 CRC-32 over the payload.
inline constexpr std::uint16_t kContainerVersion = 1;

void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& path);
LoraAdapter load_adapter(const std::filesystem::path& path);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

void save_centroid(const Centroid& centroid, const std::filesystem::path& path);
Centroid load_centroid(const std::filesystem::path& path);

}  // namespace loramix
