#pragma once

#include <string>

#include "gridsage/model.hpp"

namespace gridsage {

// Versioned binary model container, little-endian:
//   magic "GRIDSAGE" | u32 version | architecture descriptor | class names |
//   raw f64 weight arrays in declaration order | u64 FNV-1a checksum trailer.
// Round-trips are bit-exact; the checksum is verified on load.
void save_model(const ModelParams& model, const std::string& path);
ModelParams load_model(const std::string& path);

constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace gridsage
