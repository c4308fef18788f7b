#pragma once

// Self-describing weight container: model config text and fingerprint,
// training metadata, and every named tensor of each weight group.
//
// Layout (big-endian integers):
//   "DEVCCKPT" u32 version
//   u32 len + config text, u64 fingerprint
//   u32 len + metadata text (key = value)
//   u32 groups; per group: u32 len + name, u32 tensors;
//     per tensor: u32 len + name, u8 dtype (0 f32, 1 f64), u8 rank,
//     i64 dims..., raw little-endian element bytes

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "devc/codec.hpp"
#include "devc/config.hpp"

namespace devc {

struct CheckpointInfo {
  std::uint64_t fingerprint = 0;
  /// Completed training stages in order, e.g. "me,s1".
  std::vector<std::string> stages;
  std::int64_t step = 0;

  bool has_stage(const std::string& stage) const;
};

struct LoadedCheckpoint {
  std::unique_ptr<CodecModels> models;
  CheckpointInfo info;
};

std::vector<std::uint8_t> serialize_checkpoint(const CodecModels& models,
                                               const CheckpointInfo& info);
LoadedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const CodecModels& models,
                     const CheckpointInfo& info);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace devc
