#include "test_util.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "devc/error.hpp"
#include "devc/frame_io.hpp"

using namespace devc;

namespace {

// Scalar BT.601 full-range reference, written out independently.
double ref_y(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }
double ref_u(double r, double g, double b) { return 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b; }
double ref_v(double r, double g, double b) { return 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b; }
int to_code(double v) { return static_cast<int>(std::clamp(std::round(v), 0.0, 255.0)); }

RgbImage random_rgb(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RgbImage img{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3)};
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const devc::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::kUsage;
}

}  // namespace

TEST_CASE("raw 4x4 frame of 24 bytes loads with 2x2 chroma") {
  TempDir dir;
  const auto path = dir.path() / "f.yuv";
  std::vector<char> bytes(24);
  for (int i = 0; i < 24; ++i) bytes[i] = static_cast<char>(i);
  std::ofstream(path, std::ios::binary).write(bytes.data(), 24);

  const auto frame = load_raw_yuv420(path, 4, 4);
  CHECK(frame.y.width == 4);
  CHECK(frame.y.height == 4);
  CHECK(frame.u.width == 2);
  CHECK(frame.v.height == 2);
  CHECK(frame.y.at(3, 3) == 15);
  CHECK(frame.u.at(0, 0) == 16);
  CHECK(frame.v.at(1, 1) == 23);

  SUBCASE("wrong width is a size error naming the file") {
    try {
      load_raw_yuv420(path, 6, 4);
      FAIL("expected error");
    } catch (const devc::Error& e) {
      CHECK(e.kind() == ErrorKind::kInvalidGeometry);
      CHECK(std::string(e.what()).find("f.yuv") != std::string::npos);
    }
  }
  SUBCASE("odd dimensions are invalid geometry") {
    CHECK(kind_of([&] { load_raw_yuv420(path, 3, 4); }) == ErrorKind::kInvalidGeometry);
  }
}

TEST_CASE("raw load then store is byte identical") {
  TempDir dir;
  std::mt19937_64 rng(5);
  std::vector<char> bytes(16 * 8 * 3 / 2);
  for (auto& b : bytes) b = static_cast<char>(rng());
  const auto a = dir.path() / "a.yuv";
  const auto b = dir.path() / "b.yuv";
  std::ofstream(a, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  save_raw_yuv420(b, load_raw_yuv420(a, 16, 8));
  std::ifstream in(b, std::ios::binary);
  std::vector<char> back((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(back == bytes);
}

TEST_CASE("colour conversion matches the scalar oracle") {
  const auto rgb = random_rgb(8, 6, 11);
  const auto yuv = rgb_to_yuv420(rgb);
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 8; ++x) {
      const double r = rgb.at(x, y, 0), g = rgb.at(x, y, 1), b = rgb.at(x, y, 2);
      CHECK(yuv.y.at(x, y) == to_code(ref_y(r, g, b)));
    }
  }
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      double u = 0, v = 0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const double r = rgb.at(2 * x + dx, 2 * y + dy, 0);
          const double g = rgb.at(2 * x + dx, 2 * y + dy, 1);
          const double b = rgb.at(2 * x + dx, 2 * y + dy, 2);
          u += ref_u(r, g, b) / 4;
          v += ref_v(r, g, b) / 4;
        }
      }
      CHECK(yuv.u.at(x, y) == to_code(u));
      CHECK(yuv.v.at(x, y) == to_code(v));
    }
  }
}

TEST_CASE("achromatic fixed points") {
  for (int level : {0, 1, 77, 128, 200, 255}) {
    RgbImage img{2, 2, std::vector<std::uint8_t>(12, static_cast<std::uint8_t>(level))};
    const auto yuv = rgb_to_yuv420(img);
    CHECK(yuv.y.at(1, 1) == level);
    CHECK(yuv.u.at(0, 0) == 128);
    CHECK(yuv.v.at(0, 0) == 128);
  }
}

TEST_CASE("odd rgb dimensions are rejected") {
  RgbImage img{3, 2, std::vector<std::uint8_t>(18, 0)};
  CHECK(kind_of([&] { rgb_to_yuv420(img); }) == ErrorKind::kInvalidGeometry);
}

TEST_CASE("rgb round trip stays within 4 codes for block-constant chroma") {
  // Box-averaged 4:2:0 cannot preserve chroma that varies inside a 2x2
  // block, so the round-trip bound is checked on images whose colour is
  // constant per block (luma detail comes from brightness scaling).
  std::mt19937_64 rng(3);
  RgbImage img{8, 8, std::vector<std::uint8_t>(8 * 8 * 3)};
  for (int by = 0; by < 4; ++by) {
    for (int bx = 0; bx < 4; ++bx) {
      const int base[3] = {int(rng() % 256), int(rng() % 256), int(rng() % 256)};
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          for (int c = 0; c < 3; ++c) img.at(2 * bx + dx, 2 * by + dy, c) = base[c];
        }
      }
    }
  }
  const auto back = yuv420_to_rgb(rgb_to_yuv420(img));
  int worst = 0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    worst = std::max(worst, std::abs(int(img.pixels[i]) - int(back.pixels[i])));
  }
  CHECK(worst <= 4);
}

TEST_CASE("png image pair ingests through colour conversion") {
  TempDir dir;
  const auto a = random_rgb(16, 8, 1);
  const auto b = random_rgb(16, 8, 2);
  save_png(dir.path() / "a.png", a);
  save_png(dir.path() / "b.png", b);
  const auto pair =
      load_frame_pair(dir.path() / "a.png", dir.path() / "b.png", FrameFormat::kImagePair);
  CHECK(pair.reference == rgb_to_yuv420(a));
  CHECK(pair.target == rgb_to_yuv420(b));

  save_png(dir.path() / "c.png", random_rgb(8, 8, 3));
  CHECK(kind_of([&] {
          load_frame_pair(dir.path() / "a.png", dir.path() / "c.png", FrameFormat::kImagePair);
        }) == ErrorKind::kIngestion);
}

TEST_CASE("plane normalization endpoints and inverse") {
  Plane<int> p(3, 1);
  p.data = {255, -255, 0};
  const auto n = normalize_plane(p, PlaneKind::kResidual);
  CHECK(n.samples.data[0] == 1.0f);
  CHECK(n.samples.data[1] == -1.0f);

  Plane<int> flow(1, 1, 0);
  CHECK(normalize_plane(flow, PlaneKind::kFlow, 64.0).samples.data[0] == 0.5f);

  Plane<int> all(511, 1);
  for (int v = -255; v <= 255; ++v) all.data[v + 255] = v;
  CHECK(denormalize_plane(normalize_plane(all, PlaneKind::kResidual)) == all);

  Plane<int> image(256, 1);
  for (int v = 0; v < 256; ++v) image.data[v] = v;
  CHECK(denormalize_plane(normalize_plane(image, PlaneKind::kImage)) == image);
}

TEST_CASE("flow beyond the displacement limit saturates and is counted") {
  Plane<float> flow(4, 1);
  flow.data = {-100.0f, -64.0f, 10.0f, 70.0f};
  const auto n = normalize_flow(flow, 64.0);
  CHECK(n.clamped == 2);
  CHECK(n.samples.data[0] == 0.0f);
  CHECK(n.samples.data[3] == 1.0f);
  CHECK(denormalize_flow(n, 64.0).data[2] == doctest::Approx(10.0));
}

TEST_CASE("manifest rows resolve relative paths and raw sizes from names") {
  TempDir dir;
  const auto frame = YuvFrame::blank(8, 4, 60);
  save_raw_yuv420(dir.path() / "r_8x4.yuv", frame);
  save_raw_yuv420(dir.path() / "t_8x4.yuv", YuvFrame::blank(8, 4, 90));
  {
    std::ofstream m(dir.path() / "list.tsv");
    m << "one\tr_8x4.yuv\tt_8x4.yuv\n";
  }
  const auto rows = read_manifest(dir.path() / "list.tsv");
  REQUIRE(rows.size() == 1);
  const auto pair = load_manifest_pair(rows[0]);
  CHECK(pair.identifier == "one");
  CHECK(pair.reference == frame);
  CHECK(pair.target.y.at(0, 0) == 90);
}
