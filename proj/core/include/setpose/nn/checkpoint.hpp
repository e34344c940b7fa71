#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "setpose/nn/params.hpp"

namespace setpose::nn {

inline constexpr char kCheckpointMagic[4] = {'P', 'S', 'T', 'O'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A checkpoint directory holds two files:
///   manifest.json  tensor names, shapes, dtype, byte offsets into the blob,
///                  the optimizer step and a free-form "metadata" object
///   params.bin     "PSTO", u32 version, then every tensor's f64 values
///                  little-endian, concatenated in manifest order
struct Checkpoint {
  ParamStore params;
  std::uint64_t optimizer_step = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
/// Throws IoError when files are missing, FormatError on any inconsistency.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace setpose::nn
