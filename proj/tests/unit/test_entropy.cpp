#include "test_util.hpp"

#include <cmath>
#include <random>

#include "devc/bitstream.hpp"
#include "devc/entropy.hpp"

using namespace devc;

namespace {

// Ideal code length of an i.i.d. binary source, in bytes.
double ideal_bytes(std::size_t n, double p) {
  const double h = -(p * std::log2(p) + (1 - p) * std::log2(1 - p));
  return n * h / 8.0;
}

BinaryCodes bernoulli(std::size_t n, double p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution d(p);
  BinaryCodes out(n);
  for (auto& s : out) s = d(rng) ? 1 : -1;
  return out;
}

BinaryCodes constant_decode(const Payload& p, double prob, std::size_t n) {
  return range_decode(p, [prob](std::size_t, std::span<const std::int8_t>) { return prob; }, n);
}

}  // namespace

TEST_CASE("quantize and dequantize") {
  CHECK(quantize(0.7, 0.2, 0.5) == 1);
  CHECK(dequantize<double>(1, 0.2, 0.5) == doctest::Approx(0.7));
  CHECK(quantize(-0.3, 0.0, 1.0) == -1);
  CHECK(dequantize<double>(-1, 0.0, 1.0) == -1.0);
  CHECK(quantize(0.4, 0.4, 1.0) == 1);
  CHECK(quantize(0.0f, 0.0f, 2.0f) == 1);

  SUBCASE("antisymmetric about the mean") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n;
    for (int i = 0; i < 1000; ++i) {
      const double mu = n(rng), d = std::abs(n(rng)) + 1e-3, s = std::abs(n(rng)) + 0.1;
      CHECK(quantize(mu + d, mu, s) == -quantize(mu - d, mu, s));
    }
  }
  SUBCASE("invalid scale or non-finite input is numeric") {
    CHECK_THROWS_AS(quantize(0.0, 0.0, 0.0), devc::Error);
    CHECK_THROWS_AS(quantize(std::nan(""), 0.0, 1.0), devc::Error);
  }
}

TEST_CASE("fair coin costs one bit per symbol") {
  const auto symbols = bernoulli(80000, 0.5, 7);
  std::vector<double> probs(symbols.size(), 0.5);
  const auto payload = range_encode(symbols, probs);
  CHECK(payload.bytes.size() >= 10000);
  CHECK(payload.bytes.size() <= 10016);
  CHECK(constant_decode(payload, 0.5, symbols.size()) == symbols);
}

TEST_CASE("skewed source approaches its entropy") {
  const auto symbols = bernoulli(80000, 0.99, 8);
  std::vector<double> probs(symbols.size(), 0.99);
  const auto payload = range_encode(symbols, probs);
  const double ideal = ideal_bytes(80000, 0.99);
  CHECK(std::abs(double(payload.bytes.size()) - ideal) <= 0.02 * ideal + 16);
  CHECK(constant_decode(payload, 0.99, symbols.size()) == symbols);
}

TEST_CASE("adaptive probabilities round trip") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.001, 0.999);
  BinaryCodes symbols(5000);
  std::vector<double> probs(symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    probs[i] = u(rng);
    symbols[i] = std::bernoulli_distribution(probs[i])(rng) ? 1 : -1;
  }
  const auto payload = range_encode(symbols, probs);
  const auto back = range_decode(
      payload, [&](std::size_t i, std::span<const std::int8_t>) { return probs[i]; },
      symbols.size());
  CHECK(back == symbols);
}

TEST_CASE("empty and single symbol streams") {
  const auto empty = range_encode({}, {});
  CHECK(empty.symbol_count == 0);
  CHECK(empty.bytes.empty());
  CHECK(empty.serialize().size() == 8);
  CHECK(constant_decode(empty, 0.5, 0).empty());

  BinaryCodes one{-1};
  std::vector<double> p{0.3};
  const auto single = range_encode(one, p);
  CHECK(single.symbol_count == 1);
  CHECK(constant_decode(single, 0.3, 1) == one);
}

TEST_CASE("corrupting the last byte fails the checksum") {
  const auto symbols = bernoulli(2000, 0.5, 4);
  std::vector<double> probs(symbols.size(), 0.5);
  auto wire = range_encode(symbols, probs).serialize();
  wire.back() ^= 0x01;
  const auto parsed = Payload::parse(wire);
  try {
    constant_decode(parsed, 0.5, symbols.size());
    FAIL("expected checksum error");
  } catch (const devc::Error& e) {
    CHECK(e.kind() == ErrorKind::kDecode);
    CHECK(std::string(e.what()).find("checksum") != std::string::npos);
  }
}

TEST_CASE("probabilities outside the open unit interval are protocol errors") {
  for (double p : {0.0, 1.0, -0.1, 1.5}) {
    try {
      quantize_probability(p);
      FAIL("expected protocol error");
    } catch (const devc::Error& e) {
      CHECK(e.kind() == ErrorKind::kProtocol);
    }
  }
  PayloadWriter w;
  CHECK_THROWS_AS(w.put(1, 1.0), devc::Error);
}

TEST_CASE("payload wire format is big endian") {
  BinaryCodes s{1, -1, 1};
  std::vector<double> p{0.5, 0.5, 0.5};
  const auto payload = range_encode(s, p);
  const auto wire = payload.serialize();
  REQUIRE(wire.size() == payload.serialized_size());
  CHECK(wire[0] == 0);
  CHECK(wire[3] == 3);
  const std::uint32_t crc = (std::uint32_t(wire[4]) << 24) | (std::uint32_t(wire[5]) << 16) |
                            (std::uint32_t(wire[6]) << 8) | wire[7];
  CHECK(crc == payload_checksum(payload.bytes));
  CHECK(Payload::parse(wire) == payload);
}

TEST_CASE("symbol information") {
  CHECK(symbol_information(1, 0.5) == doctest::Approx(1.0));
  CHECK(symbol_information(-1, 0.75) == doctest::Approx(2.0));
}

TEST_CASE("empty 64x64 container size") {
  Bitstream bs;
  bs.width = 64;
  bs.height = 64;
  for (auto& s : bs.streams) s = range_encode({}, {});
  const auto bytes = pack(bs);
  CHECK(bytes.size() == 4 + 1 + 2 + 2 + 1 + 1 + 1 + 5 * (4 + 8));
  CHECK(unpack(bytes) == bs);
}

TEST_CASE("container fuzz round trip") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Bitstream bs;
    bs.width = static_cast<std::uint16_t>(rng() % 4096 + 2);
    bs.height = static_cast<std::uint16_t>(rng() % 4096 + 2);
    bs.pad_right = static_cast<std::uint8_t>(rng());
    bs.pad_bottom = static_cast<std::uint8_t>(rng());
    bs.mode = rng() % 2 ? CodingMode::kBypass : CodingMode::kMotionCompensated;
    for (int i = 0; i < kStreamSlots; ++i) {
      if (bs.mode == CodingMode::kBypass && i < 2) continue;
      const auto n = rng() % 300;
      const auto symbols = bernoulli(n, 0.4, rng());
      std::vector<double> probs(n, 0.4);
      bs.streams[i] = range_encode(symbols, probs);
    }
    CHECK(unpack(pack(bs)) == bs);
  }
}

TEST_CASE("malformed containers") {
  Bitstream bs;
  bs.width = 32;
  bs.height = 32;
  for (auto& s : bs.streams) s = range_encode({}, {});
  const auto good = pack(bs);

  auto expect_decode_error = [](std::vector<std::uint8_t> bytes) {
    try {
      unpack(bytes);
      FAIL("expected error");
    } catch (const devc::Error& e) {
      CHECK(e.kind() == ErrorKind::kDecode);
    }
  };
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    expect_decode_error(b);
  }
  SUBCASE("length beyond the end") {
    auto b = good;
    b[Bitstream::kHeaderBytes] = 0x7f;
    expect_decode_error(b);
  }
  SUBCASE("truncated") {
    auto b = good;
    b.resize(b.size() - 3);
    expect_decode_error(b);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    expect_decode_error(b);
  }
  SUBCASE("mode disagrees with motion payloads") {
    auto b = good;
    b[Bitstream::kHeaderBytes - 1] = 1;
    expect_decode_error(b);
  }
}
