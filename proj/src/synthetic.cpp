#include "devc/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace devc {

double Texture::sample(int channel, double x, double y) const {
  double v = base[channel];
  for (const auto& w : waves) {
    v += w.amplitude[channel] * std::sin(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) + w.phase);
  }
  for (const auto& b : blobs) {
    const double d = std::hypot(x - b.cx, y - b.cy) - b.radius;
    v += b.level[channel] / (1.0 + std::exp(d / b.softness));
  }
  return v;
}

Texture random_texture(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Texture t;
  t.base[0] = between(90.0, 160.0);
  t.base[1] = between(110.0, 146.0);
  t.base[2] = between(110.0, 146.0);
  for (int i = 0; i < 10; ++i) {
    const double wavelength = std::exp(between(std::log(10.0), std::log(80.0)));
    const double angle = between(0.0, 2.0 * std::numbers::pi);
    Texture::Wave w{std::cos(angle) / wavelength, std::sin(angle) / wavelength,
                    between(0.0, 2.0 * std::numbers::pi),
                    {between(4.0, 14.0), between(-4.0, 4.0), between(-4.0, 4.0)}};
    t.waves.push_back(w);
  }
  for (int i = 0; i < 40; ++i) {
    Texture::Blob b{between(-64.0, 576.0), between(-64.0, 576.0), between(4.0, 24.0),
                    between(0.5, 2.0),
                    {between(-60.0, 60.0), between(-20.0, 20.0), between(-20.0, 20.0)}};
    t.blobs.push_back(b);
  }
  return t;
}

YuvFrame render_texture(const Texture& texture, int width, int height, double ox, double oy) {
  auto frame = YuvFrame::blank(width, height);
  auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
  };
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) frame.y.at(x, y) = to_byte(texture.sample(0, x + ox, y + oy));
  }
  for (int y = 0; y < height / 2; ++y) {
    for (int x = 0; x < width / 2; ++x) {
      const double cx = 2 * x + 0.5 + ox;
      const double cy = 2 * y + 0.5 + oy;
      frame.u.at(x, y) = to_byte(texture.sample(1, cx, cy));
      frame.v.at(x, y) = to_byte(texture.sample(2, cx, cy));
    }
  }
  return frame;
}

FramePair translation_pair(int width, int height, int dx, int dy, std::uint64_t seed) {
  const auto texture = random_texture(seed);
  return {render_texture(texture, width, height), render_texture(texture, width, height, dx, dy),
          "shift_" + std::to_string(seed) + "_" + std::to_string(dx) + "_" + std::to_string(dy)};
}

FramePair static_pair(int width, int height, std::uint64_t seed) {
  const auto frame = render_texture(random_texture(seed), width, height);
  return {frame, frame, "static_" + std::to_string(seed)};
}

FramePair scene_cut_pair(int width, int height, std::uint64_t seed) {
  return {render_texture(random_texture(seed), width, height),
          render_texture(random_texture(seed ^ 0x9e3779b97f4a7c15ull), width, height),
          "cut_" + std::to_string(seed)};
}

std::vector<FramePair> translation_dataset(int count, int width, int height, int max_shift,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-max_shift, max_shift);
  std::vector<FramePair> pairs;
  for (int i = 0; i < count; ++i) {
    const int dx = shift(rng);
    const int dy = shift(rng);
    pairs.push_back(translation_pair(width, height, dx, dy, rng()));
  }
  return pairs;
}

}  // namespace devc
