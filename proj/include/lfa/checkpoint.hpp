#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "lfa/tensor.hpp"

namespace lfa {

// Parameter checkpoint wire format:
//   magic "LFA1"
//   u64   parameter count
//   per parameter:
//     u32  name length, UTF-8 name bytes
//     u32  rank
//     u64  dims[rank]
//     f32  data (little-endian IEEE-754)
// Values are stored in single precision; write -> read -> write is
// byte-identical.

std::vector<uint8_t> serialize_params(const std::vector<Parameter>& params);
std::vector<Parameter> deserialize_params(const std::vector<uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<Parameter>& params);
std::vector<Parameter> load_checkpoint(const std::filesystem::path& path);

// SHA-256 of the serialized checkpoint bytes; identifies which model
// produced an embedding.
std::array<uint8_t, 32> sha256(const uint8_t* data, size_t size);
std::array<uint8_t, 32> model_fingerprint(const std::vector<Parameter>& params);

}  // namespace lfa
