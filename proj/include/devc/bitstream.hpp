#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "devc/entropy.hpp"

namespace devc {

enum class CodingMode : std::uint8_t { kMotionCompensated = 0, kBypass = 1 };

/// Directory slots, in container order.
enum class StreamSlot : int { kMv = 0, kMvHyper = 1, kY = 2, kU = 3, kV = 4 };
inline constexpr int kStreamSlots = 5;

/// The serialized P-frame container. All integers are big-endian:
///   "DEVC" | version u8 | width u16 | height u16 | pad_right u8 |
///   pad_bottom u8 | mode u8 | 5 x { length u32 | payload bytes }
/// An absent payload is stored with length 0 (motion slots in bypass mode).
struct Bitstream {
  static constexpr std::array<char, 4> kMagic{'D', 'E', 'V', 'C'};
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 4 + 1 + 2 + 2 + 1 + 1 + 1;

  std::uint8_t version = kVersion;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t pad_right = 0;
  std::uint8_t pad_bottom = 0;
  CodingMode mode = CodingMode::kMotionCompensated;
  std::array<std::optional<Payload>, kStreamSlots> streams;

  std::optional<Payload>& stream(StreamSlot s) { return streams[static_cast<int>(s)]; }
  const std::optional<Payload>& stream(StreamSlot s) const {
    return streams[static_cast<int>(s)];
  }

  /// Bytes taken by one directory entry including its length field.
  std::size_t entry_bytes(StreamSlot s) const;

  bool operator==(const Bitstream&) const = default;
};

std::vector<std::uint8_t> pack(const Bitstream& bitstream);
Bitstream unpack(std::span<const std::uint8_t> bytes);

}  // namespace devc
