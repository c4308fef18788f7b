#include "devc/entropy.hpp"

#include <zlib.h>

#include <algorithm>
#include <limits>

namespace devc {

namespace {

constexpr std::uint32_t kTopValue = 1u << 24;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(std::span<const std::uint8_t> data, std::size_t at) {
  return (std::uint32_t{data[at]} << 24) | (std::uint32_t{data[at + 1]} << 16) |
         (std::uint32_t{data[at + 2]} << 8) | std::uint32_t{data[at + 3]};
}

}  // namespace

std::uint16_t quantize_probability(double p_plus) {
  if (!(p_plus > 0.0 && p_plus < 1.0)) {
    fail(ErrorKind::kProtocol, "symbol probability outside (0,1): " +
                                   std::to_string(p_plus));
  }
  const double scaled = std::round(p_plus * 65536.0);
  return static_cast<std::uint16_t>(std::clamp(scaled, 1.0, 65535.0));
}

void RangeEncoder::encode(std::int8_t symbol, std::uint16_t p_plus) {
  const std::uint32_t bound = (range_ >> kProbabilityBits) * p_plus;
  if (symbol > 0) {
    range_ = bound;
  } else {
    low_ += bound;
    range_ -= bound;
  }
  while (range_ < kTopValue) {
    range_ <<= 8;
    shift_low();
  }
  ++symbols_;
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t pending = cache_;
    do {
      // The very first byte is always zero; the decoder implies it.
      if (leading_) {
        leading_ = false;
      } else {
        out_.push_back(static_cast<std::uint8_t>(pending + carry));
      }
      pending = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  if (symbols_ == 0) return {};
  // Any value in [low, low + range) identifies the stream. Pick the one
  // whose bytes below the top byte are zero, emit up to that byte, and drop
  // trailing zeros: the decoder reads zeros past the end.
  low_ = (low_ + 0x00FFFFFFu) & ~std::uint64_t{0x00FFFFFFu};
  shift_low();
  shift_low();
  while (!out_.empty() && out_.back() == 0) out_.pop_back();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

std::uint8_t RangeDecoder::next_byte() {
  return pos_ < bytes_.size() ? bytes_[pos_++] : std::uint8_t{0};
}

std::int8_t RangeDecoder::decode(std::uint16_t p_plus) {
  if (!primed_) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next_byte();
    primed_ = true;
  }
  const std::uint32_t bound = (range_ >> kProbabilityBits) * p_plus;
  std::int8_t symbol;
  if (code_ < bound) {
    range_ = bound;
    symbol = 1;
  } else {
    code_ -= bound;
    range_ -= bound;
    symbol = -1;
  }
  while (range_ < kTopValue) {
    range_ <<= 8;
    code_ = (code_ << 8) | next_byte();
  }
  return symbol;
}

std::uint32_t payload_checksum(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks for very large payloads.
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - offset, std::numeric_limits<uInt>::max()));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> Payload::serialize() const {
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size());
  put_u32(out, symbol_count);
  put_u32(out, checksum);
  out.insert(out.end(), bytes.begin(), bytes.end());
  return out;
}

Payload Payload::parse(std::span<const std::uint8_t> data) {
  if (data.size() < 8) {
    fail(ErrorKind::kDecode, "payload shorter than its 8-byte header");
  }
  Payload p;
  p.symbol_count = get_u32(data, 0);
  p.checksum = get_u32(data, 4);
  p.bytes.assign(data.begin() + 8, data.end());
  return p;
}

void PayloadWriter::put(std::int8_t symbol, double p_plus) {
  encoder_.encode(symbol, quantize_probability(p_plus));
  ++count_;
}

Payload PayloadWriter::finish() {
  if (count_ > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorKind::kContainer, "symbol count overflows u32");
  }
  Payload p;
  p.symbol_count = static_cast<std::uint32_t>(count_);
  p.bytes = encoder_.finish();
  p.checksum = payload_checksum(p.bytes);
  return p;
}

PayloadReader::PayloadReader(const Payload& payload)
    : payload_(payload), decoder_(payload.bytes), remaining_(payload.symbol_count) {
  if (payload_checksum(payload.bytes) != payload.checksum) {
    fail(ErrorKind::kDecode, "payload checksum mismatch");
  }
}

std::int8_t PayloadReader::get(double p_plus) {
  if (remaining_ == 0) {
    fail(ErrorKind::kDecode, "payload holds fewer symbols than requested");
  }
  --remaining_;
  return decoder_.decode(quantize_probability(p_plus));
}

Payload range_encode(std::span<const std::int8_t> symbols,
                     std::span<const double> probabilities) {
  if (symbols.size() != probabilities.size()) {
    fail(ErrorKind::kProtocol, "symbol and probability counts differ");
  }
  PayloadWriter writer;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] != 1 && symbols[i] != -1) {
      fail(ErrorKind::kProtocol, "symbol outside {-1,+1}");
    }
    writer.put(symbols[i], probabilities[i]);
  }
  return writer.finish();
}

BinaryCodes range_decode(const Payload& payload, const ProbabilitySource& source,
                         std::size_t n) {
  if (payload.symbol_count != n) {
    fail(ErrorKind::kDecode, "payload declares " + std::to_string(payload.symbol_count) +
                                 " symbols, caller expects " + std::to_string(n));
  }
  PayloadReader reader(payload);
  BinaryCodes out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = source(i, std::span<const std::int8_t>(out.data(), out.size()));
    out.push_back(reader.get(p));
  }
  return out;
}

double symbol_information(std::int8_t symbol, double p_plus) {
  return -std::log2(symbol > 0 ? p_plus : 1.0 - p_plus);
}

}  // namespace devc
