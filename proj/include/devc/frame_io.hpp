#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "devc/error.hpp"

namespace devc {

/// Row-major 2-D sample grid.
template <typename T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Plane() = default;
  Plane(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const { return data.size(); }

  bool operator==(const Plane&) const = default;
};

/// Planar 8-bit 4:2:0 frame. Chroma planes are exactly half the luma size.
struct YuvFrame {
  Plane<std::uint8_t> y;
  Plane<std::uint8_t> u;
  Plane<std::uint8_t> v;

  static YuvFrame blank(int width, int height, std::uint8_t luma = 0,
                        std::uint8_t chroma = 128);

  int width() const { return y.width; }
  int height() const { return y.height; }
  std::size_t pixel_count() const { return y.size(); }
  std::size_t byte_size() const { return y.size() + u.size() + v.size(); }

  /// Throws kInvalidGeometry when the 4:2:0 shape contract is broken.
  void validate() const;

  const Plane<std::uint8_t>& plane(int index) const;
  Plane<std::uint8_t>& plane(int index);

  bool operator==(const YuvFrame&) const = default;
};

struct FramePair {
  YuvFrame reference;
  YuvFrame target;
  std::string identifier;
};

/// Interleaved 8-bit RGB image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // r,g,b per pixel

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
};

enum class FrameFormat { kRawYuv420, kImagePair };

/// BT.601 full-range with 2x2 box-averaged chroma.
YuvFrame rgb_to_yuv420(const RgbImage& rgb);
/// Inverse conversion; chroma is replicated to 2x2 before the matrix.
RgbImage yuv420_to_rgb(const YuvFrame& frame);

YuvFrame load_raw_yuv420(const std::filesystem::path& path, int width,
                         int height);
void save_raw_yuv420(const std::filesystem::path& path, const YuvFrame& frame);

RgbImage load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const RgbImage& image);

/// Loads any frame: PNG-class files are colour converted, everything else is
/// read as raw planar YUV420 of the given size.
YuvFrame load_frame(const std::filesystem::path& path, FrameFormat format,
                    int width, int height);
void save_frame(const std::filesystem::path& path, const YuvFrame& frame);
FrameFormat guess_format(const std::filesystem::path& path);

FramePair load_frame_pair(const std::filesystem::path& ref_path,
                          const std::filesystem::path& target_path,
                          FrameFormat format, int width = 0, int height = 0);

enum class PlaneKind { kImage, kResidual, kFlow };

/// Unit-scale samples: image in [0,1], residual in [-1,1], flow in [0,1].
struct NormalizedPlane {
  PlaneKind kind = PlaneKind::kImage;
  Plane<float> samples;
  /// Flow samples saturated at the displacement limit.
  std::size_t clamped = 0;
};

inline constexpr double kDefaultMaxDisplacement = 64.0;

NormalizedPlane normalize_plane(const Plane<int>& plane, PlaneKind kind,
                                double max_displacement = kDefaultMaxDisplacement);
NormalizedPlane normalize_plane(const Plane<std::uint8_t>& plane);
NormalizedPlane normalize_flow(const Plane<float>& flow,
                               double max_displacement = kDefaultMaxDisplacement);
Plane<int> denormalize_plane(const NormalizedPlane& plane,
                             double max_displacement = kDefaultMaxDisplacement);
Plane<float> denormalize_flow(const NormalizedPlane& plane,
                              double max_displacement = kDefaultMaxDisplacement);

struct ManifestEntry {
  std::string identifier;
  std::filesystem::path reference;
  std::filesystem::path target;
};

/// `identifier<TAB>ref_path<TAB>target_path` per line; relative paths resolve
/// against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries);

/// Loads one manifest row. Raw frames take their size from the arguments,
/// or from the last `WxH` token in the reference file name.
FramePair load_manifest_pair(const ManifestEntry& entry, int width = 0, int height = 0);

}  // namespace devc
