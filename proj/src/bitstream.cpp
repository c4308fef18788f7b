#include "devc/bitstream.hpp"

#include <algorithm>
#include <limits>
#include <string>

namespace devc {

namespace {

constexpr const char* kSlotNames[kStreamSlots] = {"mv", "mv_hyper", "y_res", "u_res",
                                                  "v_res"};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t take(int width, const char* field) {
    if (bytes_.size() - pos_ < static_cast<std::size_t>(width)) {
      fail(ErrorKind::kDecode, std::string("truncated container at field '") + field + "'");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < width; ++i) v = (v << 8) | bytes_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> take_bytes(std::size_t n, const char* field) {
    if (bytes_.size() - pos_ < n) {
      fail(ErrorKind::kDecode, std::string("length of '") + field +
                                   "' exceeds the remaining " +
                                   std::to_string(bytes_.size() - pos_) + " bytes");
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put(std::vector<std::uint8_t>& out, std::uint32_t v, int width) {
  for (int i = width - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

std::size_t Bitstream::entry_bytes(StreamSlot s) const {
  const auto& p = stream(s);
  return 4 + (p ? p->serialized_size() : 0);
}

std::vector<std::uint8_t> pack(const Bitstream& bs) {
  const bool bypass = bs.mode == CodingMode::kBypass;
  const bool has_mv = bs.stream(StreamSlot::kMv) && bs.stream(StreamSlot::kMvHyper);
  const bool any_mv = bs.stream(StreamSlot::kMv) || bs.stream(StreamSlot::kMvHyper);
  if (bypass ? any_mv : !has_mv) {
    fail(ErrorKind::kContainer, "motion payloads must be present exactly when mode is "
                                "motion-compensated");
  }
  std::vector<std::uint8_t> out(Bitstream::kMagic.begin(), Bitstream::kMagic.end());
  put(out, bs.version, 1);
  put(out, bs.width, 2);
  put(out, bs.height, 2);
  put(out, bs.pad_right, 1);
  put(out, bs.pad_bottom, 1);
  put(out, static_cast<std::uint8_t>(bs.mode), 1);
  for (int i = 0; i < kStreamSlots; ++i) {
    const auto& p = bs.streams[i];
    if (!p) {
      put(out, 0, 4);
      continue;
    }
    if (p->serialized_size() > std::numeric_limits<std::uint32_t>::max()) {
      fail(ErrorKind::kContainer, std::string("payload '") + kSlotNames[i] +
                                      "' does not fit a u32 length");
    }
    put(out, static_cast<std::uint32_t>(p->serialized_size()), 4);
    const auto bytes = p->serialize();
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
  return out;
}

Bitstream unpack(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Bitstream bs;
  const auto magic = r.take_bytes(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), Bitstream::kMagic.begin())) {
    fail(ErrorKind::kDecode, "bad magic: not a DEVC container");
  }
  bs.version = static_cast<std::uint8_t>(r.take(1, "version"));
  if (bs.version != Bitstream::kVersion) {
    fail(ErrorKind::kDecode, "unsupported container version " + std::to_string(bs.version));
  }
  bs.width = static_cast<std::uint16_t>(r.take(2, "width"));
  bs.height = static_cast<std::uint16_t>(r.take(2, "height"));
  bs.pad_right = static_cast<std::uint8_t>(r.take(1, "pad_right"));
  bs.pad_bottom = static_cast<std::uint8_t>(r.take(1, "pad_bottom"));
  const auto mode = r.take(1, "mode");
  if ((mode & ~1u) != 0) fail(ErrorKind::kDecode, "reserved bits set in field 'mode'");
  bs.mode = static_cast<CodingMode>(mode & 1u);
  for (int i = 0; i < kStreamSlots; ++i) {
    const std::uint32_t length = r.take(4, kSlotNames[i]);
    if (length == 0) continue;
    if (length < 8) {
      fail(ErrorKind::kDecode, std::string("payload '") + kSlotNames[i] +
                                   "' shorter than its header");
    }
    bs.streams[i] = Payload::parse(r.take_bytes(length, kSlotNames[i]));
  }
  if (r.remaining() != 0) {
    fail(ErrorKind::kDecode, std::to_string(r.remaining()) +
                                 " trailing bytes after the payload directory");
  }
  const bool any_mv = bs.stream(StreamSlot::kMv) || bs.stream(StreamSlot::kMvHyper);
  const bool has_mv = bs.stream(StreamSlot::kMv) && bs.stream(StreamSlot::kMvHyper);
  if (bs.mode == CodingMode::kBypass && any_mv) {
    fail(ErrorKind::kDecode, "field 'mode' says bypass but motion payloads are present");
  }
  if (bs.mode == CodingMode::kMotionCompensated && !has_mv) {
    fail(ErrorKind::kDecode, "field 'mode' says motion-compensated but motion payloads are missing");
  }
  return bs;
}

}  // namespace devc
