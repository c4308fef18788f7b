#pragma once

// Procedural textured frames for desk-scale training and tests. A texture is
// a continuous function sampled at pixel centres, so any translation is an
// exact resampling of the same scene.

#include <cstdint>
#include <string>
#include <vector>

#include "devc/frame_io.hpp"

namespace devc {

struct Texture {
  struct Wave {
    double fx, fy, phase;
    double amplitude[3];  // Y, U, V
  };
  struct Blob {
    double cx, cy, radius, softness;
    double level[3];
  };
  double base[3] = {128.0, 128.0, 128.0};
  std::vector<Wave> waves;
  std::vector<Blob> blobs;

  double sample(int channel, double x, double y) const;
};

Texture random_texture(std::uint64_t seed);

/// Frame whose luma pixel (x, y) shows the texture at (x + ox, y + oy).
YuvFrame render_texture(const Texture& texture, int width, int height, double ox = 0.0,
                        double oy = 0.0);

/// target(p) = reference(p + (dx, dy)); the true backward flow is (dx, dy).
FramePair translation_pair(int width, int height, int dx, int dy, std::uint64_t seed);
FramePair static_pair(int width, int height, std::uint64_t seed);
/// Reference and target drawn from unrelated textures.
FramePair scene_cut_pair(int width, int height, std::uint64_t seed);

/// Translation pairs with shifts uniform in [-max_shift, max_shift]^2.
std::vector<FramePair> translation_dataset(int count, int width, int height, int max_shift,
                                           std::uint64_t seed);

}  // namespace devc
