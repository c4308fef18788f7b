#pragma once

// Binary quantization of latents and the binary range coder that carries
// the resulting {-1,+1} symbols.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "devc/error.hpp"

namespace devc {

/// One transmitted symbol per latent sample, each exactly -1 or +1.
using BinaryCodes = std::vector<std::int8_t>;

/// sign(y - mu) with ties going to +1.
template <std::floating_point T>
std::int8_t quantize(T y, T mu, T sigma) {
  if (!std::isfinite(y) || !std::isfinite(mu) || !std::isfinite(sigma)) {
    fail(ErrorKind::kNumeric, "quantize: non-finite input");
  }
  if (!(sigma > T(0))) fail(ErrorKind::kNumeric, "quantize: sigma must be positive");
  return y >= mu ? std::int8_t{1} : std::int8_t{-1};
}

/// Reconstruction level mu + sigma * b.
template <std::floating_point T>
T dequantize(std::int8_t b, T mu, T sigma) {
  return mu + sigma * static_cast<T>(b);
}

/// Probabilities enter the coder as 16-bit fixed point in [1, 65535].
inline constexpr int kProbabilityBits = 16;
std::uint16_t quantize_probability(double p_plus);

class RangeEncoder {
 public:
  void encode(std::int8_t symbol, std::uint16_t p_plus);
  /// Terminates the stream; the encoder must not be used afterwards.
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::size_t symbols_ = 0;
  bool leading_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes);
  std::int8_t decode(std::uint16_t p_plus);

 private:
  std::uint8_t next_byte();

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  bool primed_ = false;
};

/// A coded symbol stream plus the integrity fields stored with it.
struct Payload {
  std::uint32_t symbol_count = 0;
  std::uint32_t checksum = 0;
  std::vector<std::uint8_t> bytes;

  /// [symbol_count u32 BE][checksum u32 BE][coder bytes]
  std::vector<std::uint8_t> serialize() const;
  static Payload parse(std::span<const std::uint8_t> data);
  std::size_t serialized_size() const { return 8 + bytes.size(); }

  bool operator==(const Payload&) const = default;
};

std::uint32_t payload_checksum(std::span<const std::uint8_t> bytes);

/// Incremental encoder used when probabilities are produced on the fly.
class PayloadWriter {
 public:
  void put(std::int8_t symbol, double p_plus);
  std::size_t count() const { return count_; }
  Payload finish();

 private:
  RangeEncoder encoder_;
  std::size_t count_ = 0;
};

/// Verifies the checksum up front, then yields symbols one by one.
class PayloadReader {
 public:
  explicit PayloadReader(const Payload& payload);
  std::int8_t get(double p_plus);
  std::size_t remaining() const { return remaining_; }

 private:
  const Payload& payload_;
  RangeDecoder decoder_;
  std::size_t remaining_;
};

Payload range_encode(std::span<const std::int8_t> symbols,
                     std::span<const double> probabilities);

/// Yields P(next symbol = +1) given every symbol decoded so far.
using ProbabilitySource =
    std::function<double(std::size_t index, std::span<const std::int8_t> decoded)>;

BinaryCodes range_decode(const Payload& payload, const ProbabilitySource& source,
                         std::size_t n);

/// -log2 of the probability the coder assigns to `symbol`.
double symbol_information(std::int8_t symbol, double p_plus);

}  // namespace devc
