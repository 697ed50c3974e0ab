#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "splitface/model.hpp"
#include "splitface/nn/adam.hpp"

namespace splitface {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int stage = 0;             // 0 untrained, 1 or 2
  int epochs_completed = 0;  // within `stage`
  std::uint64_t seed = 0;
  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  std::unique_ptr<SplitFaceModel> model;
  std::optional<nn::AdamState<float>> adam;
  CheckpointMeta meta;
};

/// Binary layout, little-endian:
///   "SPLF", u32 version, f64 width scale, u32 K, K names,
///   16 masks (u32 count + u32 indices), meta (u32 stage, u32 epochs, u64 seed),
///   u32 tensor count + named tensors (priors, parameters, buffers),
///   u8 has-ADAM [+ i64 step, 4 x f64 config, two named-tensor lists],
///   u64 FNV-1a of everything before it.
/// Strings are u32 length + bytes. A named tensor is a string, a u8 dtype
/// (0 f32, 1 f64, 2 i64), u32 rank, u32 dims and the raw values.
std::vector<std::uint8_t> serialize_checkpoint(SplitFaceModel& model, const nn::AdamState<float>* adam,
                                               const CheckpointMeta& meta);
/// Throws CorruptCheckpoint on bad magic, version, checksum, truncation or
/// tensors that do not fit the model.
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, SplitFaceModel& model,
                     const nn::AdamState<float>* adam, const CheckpointMeta& meta);
/// Throws MissingInput when the file does not exist.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace splitface
