#pragma once

#include <filesystem>
#include <string>
#include <variant>

#include "canids/nn.hpp"
#include "canids/quant.hpp"

namespace canids {

// Bundle layout: <dir>/manifest.json plus one little-endian blob per tensor.
// The manifest records format version, model kind, architecture, and a CRC-32
// per blob; loading is self-describing and bit-exact.

inline constexpr int kBundleFormatVersion = 1;

void save_bundle(const CnnModel& model, const std::filesystem::path& dir);
void save_bundle(const QuantModel& model, const std::filesystem::path& dir);

using AnyModel = std::variant<CnnModel, QuantModel>;

AnyModel load_bundle(const std::filesystem::path& dir);
CnnModel load_float_bundle(const std::filesystem::path& dir);
QuantModel load_quant_bundle(const std::filesystem::path& dir);

// CRC-32 over the trainable parameters in traversal order; two models with
// equal hashes carry the same weight set.
uint32_t parameter_crc(const CnnModel& model);
uint32_t parameter_crc(const QuantModel& model);

} // namespace canids
