#include "devc/frame_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <regex>
#include <tuple>
#include <sstream>

namespace devc {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidGeometry: return "invalid-geometry";
    case ErrorKind::kIngestion: return "ingestion";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kDecode: return "decode";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kContainer: return "container";
    case ErrorKind::kUsage: return "usage";
  }
  return "unknown";
}

namespace {

std::uint8_t to_u8(double value) {
  return static_cast<std::uint8_t>(std::clamp(std::round(value), 0.0, 255.0));
}

void require_even(int width, int height) {
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    fail(ErrorKind::kInvalidGeometry,
         "frame dimensions must be positive and even, got " +
             std::to_string(width) + "x" + std::to_string(height));
  }
}

}  // namespace

YuvFrame YuvFrame::blank(int width, int height, std::uint8_t luma,
                         std::uint8_t chroma) {
  require_even(width, height);
  YuvFrame frame;
  frame.y = Plane<std::uint8_t>(width, height, luma);
  frame.u = Plane<std::uint8_t>(width / 2, height / 2, chroma);
  frame.v = Plane<std::uint8_t>(width / 2, height / 2, chroma);
  return frame;
}

void YuvFrame::validate() const {
  require_even(y.width, y.height);
  for (const auto* c : {&u, &v}) {
    if (c->width * 2 != y.width || c->height * 2 != y.height ||
        c->size() != static_cast<std::size_t>(c->width) * c->height) {
      fail(ErrorKind::kInvalidGeometry, "chroma plane is not half the luma size");
    }
  }
  if (y.size() != static_cast<std::size_t>(y.width) * y.height) {
    fail(ErrorKind::kInvalidGeometry, "luma sample count does not match size");
  }
}

const Plane<std::uint8_t>& YuvFrame::plane(int index) const {
  return index == 0 ? y : (index == 1 ? u : v);
}

Plane<std::uint8_t>& YuvFrame::plane(int index) {
  return index == 0 ? y : (index == 1 ? u : v);
}

YuvFrame rgb_to_yuv420(const RgbImage& rgb) {
  require_even(rgb.width, rgb.height);
  YuvFrame frame = YuvFrame::blank(rgb.width, rgb.height);
  for (int cy = 0; cy < rgb.height / 2; ++cy) {
    for (int cx = 0; cx < rgb.width / 2; ++cx) {
      double u_sum = 0.0;
      double v_sum = 0.0;
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int x = 2 * cx + dx;
          const int y = 2 * cy + dy;
          const double r = rgb.at(x, y, 0);
          const double g = rgb.at(x, y, 1);
          const double b = rgb.at(x, y, 2);
          frame.y.at(x, y) = to_u8(0.299 * r + 0.587 * g + 0.114 * b);
          u_sum += -0.168736 * r - 0.331264 * g + 0.5 * b;
          v_sum += 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
      }
      frame.u.at(cx, cy) = to_u8(u_sum / 4.0 + 128.0);
      frame.v.at(cx, cy) = to_u8(v_sum / 4.0 + 128.0);
    }
  }
  return frame;
}

RgbImage yuv420_to_rgb(const YuvFrame& frame) {
  frame.validate();
  RgbImage rgb{frame.width(), frame.height(),
               std::vector<std::uint8_t>(frame.pixel_count() * 3)};
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      const double luma = frame.y.at(x, y);
      const double cb = frame.u.at(x / 2, y / 2) - 128.0;
      const double cr = frame.v.at(x / 2, y / 2) - 128.0;
      rgb.at(x, y, 0) = to_u8(luma + 1.402 * cr);
      rgb.at(x, y, 1) = to_u8(luma - 0.344136 * cb - 0.714136 * cr);
      rgb.at(x, y, 2) = to_u8(luma + 1.772 * cb);
    }
  }
  return rgb;
}

YuvFrame load_raw_yuv420(const std::filesystem::path& path, int width,
                         int height) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIngestion, "cannot open " + path.string());
  if (width <= 0 || height <= 0 || width % 2 != 0 || height % 2 != 0) {
    fail(ErrorKind::kInvalidGeometry,
         path.string() + ": width/height must be positive and even");
  }
  const auto expected = static_cast<std::uintmax_t>(width) * height * 3 / 2;
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected) {
    fail(ErrorKind::kInvalidGeometry,
         path.string() + ": size " + std::to_string(actual) + " bytes, expected " +
             std::to_string(expected) + " for " + std::to_string(width) + "x" +
             std::to_string(height) + " yuv420");
  }
  YuvFrame frame = YuvFrame::blank(width, height);
  for (int i = 0; i < 3; ++i) {
    auto& p = frame.plane(i);
    in.read(reinterpret_cast<char*>(p.data.data()),
            static_cast<std::streamsize>(p.data.size()));
  }
  if (!in) fail(ErrorKind::kIngestion, "short read from " + path.string());
  return frame;
}

void save_raw_yuv420(const std::filesystem::path& path, const YuvFrame& frame) {
  frame.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  for (int i = 0; i < 3; ++i) {
    const auto& p = frame.plane(i);
    out.write(reinterpret_cast<const char*>(p.data.data()),
              static_cast<std::streamsize>(p.data.size()));
  }
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

RgbImage load_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(ErrorKind::kIngestion, "cannot open " + path.string());
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorKind::kIngestion, "malformed PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  RgbImage image;
  image.width = static_cast<int>(png_get_image_width(png, info));
  image.height = static_cast<int>(png_get_image_height(png, info));
  image.pixels.resize(static_cast<std::size_t>(image.width) * image.height * 3);
  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    rows[y] = image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void save_png(const std::filesystem::path& path, const RgbImage& image) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(ErrorKind::kIngestion, "cannot write " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorKind::kIngestion, "PNG encoding failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, image.width, image.height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() +
                           static_cast<std::size_t>(y) * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

FrameFormat guess_format(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? FrameFormat::kImagePair : FrameFormat::kRawYuv420;
}

YuvFrame load_frame(const std::filesystem::path& path, FrameFormat format,
                    int width, int height) {
  if (format == FrameFormat::kImagePair) {
    const RgbImage rgb = load_png(path);
    if (rgb.width % 2 != 0 || rgb.height % 2 != 0) {
      fail(ErrorKind::kInvalidGeometry, path.string() + ": odd image dimensions");
    }
    return rgb_to_yuv420(rgb);
  }
  return load_raw_yuv420(path, width, height);
}

void save_frame(const std::filesystem::path& path, const YuvFrame& frame) {
  if (guess_format(path) == FrameFormat::kImagePair) {
    save_png(path, yuv420_to_rgb(frame));
  } else {
    save_raw_yuv420(path, frame);
  }
}

FramePair load_frame_pair(const std::filesystem::path& ref_path,
                          const std::filesystem::path& target_path,
                          FrameFormat format, int width, int height) {
  FramePair pair;
  pair.reference = load_frame(ref_path, format, width, height);
  pair.target = load_frame(target_path, format, width, height);
  if (pair.reference.width() != pair.target.width() ||
      pair.reference.height() != pair.target.height()) {
    fail(ErrorKind::kIngestion,
         target_path.string() + ": dimensions differ from reference " +
             ref_path.string());
  }
  pair.identifier = target_path.stem().string();
  return pair;
}

static std::optional<std::pair<int, int>> size_from_name(const std::filesystem::path& path) {
  static const std::regex pattern(R"((\d+)x(\d+))");
  const auto stem = path.stem().string();
  std::smatch match;
  std::optional<std::pair<int, int>> found;
  for (auto it = stem.cbegin(); std::regex_search(it, stem.cend(), match, pattern);
       it = match.suffix().first) {
    found = std::make_pair(std::stoi(match[1]), std::stoi(match[2]));
  }
  return found;
}

FramePair load_manifest_pair(const ManifestEntry& entry, int width, int height) {
  const auto format = guess_format(entry.reference);
  if (format == FrameFormat::kRawYuv420 && (width <= 0 || height <= 0)) {
    const auto size = size_from_name(entry.reference);
    if (!size) {
      fail(ErrorKind::kIngestion,
           entry.reference.string() + ": raw frame size unknown (name it like frame_64x48.yuv)");
    }
    std::tie(width, height) = *size;
  }
  auto pair = load_frame_pair(entry.reference, entry.target, format, width, height);
  pair.identifier = entry.identifier;
  return pair;
}

NormalizedPlane normalize_plane(const Plane<int>& plane, PlaneKind kind,
                                double max_displacement) {
  NormalizedPlane out;
  out.kind = kind;
  out.samples = Plane<float>(plane.width, plane.height);
  if (kind == PlaneKind::kFlow) {
    Plane<float> flow(plane.width, plane.height);
    std::transform(plane.data.begin(), plane.data.end(), flow.data.begin(),
                   [](int v) { return static_cast<float>(v); });
    return normalize_flow(flow, max_displacement);
  }
  for (std::size_t i = 0; i < plane.size(); ++i) {
    const int v = plane.data[i];
    if (kind == PlaneKind::kImage ? (v < 0 || v > 255) : (v < -255 || v > 255)) {
      fail(ErrorKind::kNumeric, "sample " + std::to_string(v) +
                                    " outside the 8-bit range of its kind");
    }
    out.samples.data[i] = static_cast<float>(v / 255.0);
  }
  return out;
}

NormalizedPlane normalize_plane(const Plane<std::uint8_t>& plane) {
  NormalizedPlane out;
  out.kind = PlaneKind::kImage;
  out.samples = Plane<float>(plane.width, plane.height);
  std::transform(plane.data.begin(), plane.data.end(), out.samples.data.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v / 255.0); });
  return out;
}

NormalizedPlane normalize_flow(const Plane<float>& flow, double max_displacement) {
  if (max_displacement <= 0.0) {
    fail(ErrorKind::kConfiguration, "flow displacement limit must be positive");
  }
  NormalizedPlane out;
  out.kind = PlaneKind::kFlow;
  out.samples = Plane<float>(flow.width, flow.height);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    double v = flow.data[i];
    if (v > max_displacement || v < -max_displacement) {
      v = std::clamp(v, -max_displacement, max_displacement);
      ++out.clamped;
    }
    out.samples.data[i] =
        static_cast<float>((v + max_displacement) / (2.0 * max_displacement));
  }
  return out;
}

Plane<int> denormalize_plane(const NormalizedPlane& plane, double max_displacement) {
  Plane<int> out(plane.samples.width, plane.samples.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double s = plane.samples.data[i];
    const double v = plane.kind == PlaneKind::kFlow
                         ? s * 2.0 * max_displacement - max_displacement
                         : s * 255.0;
    out.data[i] = static_cast<int>(std::round(v));
  }
  return out;
}

Plane<float> denormalize_flow(const NormalizedPlane& plane, double max_displacement) {
  Plane<float> out(plane.samples.width, plane.samples.height);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = static_cast<float>(plane.samples.data[i] * 2.0 * max_displacement -
                                     max_displacement);
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIngestion, "cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 3) {
      fail(ErrorKind::kIngestion, path.string() + ":" + std::to_string(line_no) +
                                      ": expected 3 tab-separated fields");
    }
    auto resolve = [&](const std::string& p) {
      std::filesystem::path fp(p);
      return fp.is_absolute() ? fp : base / fp;
    };
    entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2])});
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIngestion, "cannot write manifest " + path.string());
  for (const auto& e : entries) {
    out << e.identifier << '\t' << e.reference.string() << '\t' << e.target.string()
        << '\n';
  }
}

}  // namespace devc
