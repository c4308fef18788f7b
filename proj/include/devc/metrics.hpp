#pragma once

// Quality metrics and the size-weighted corpus aggregation used for
// reporting.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "devc/frame_io.hpp"

namespace devc {

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363,
                                                      0.1333};
inline constexpr double kPsnrCap = 99.0;

/// Number of MS-SSIM scales usable at this minimum dimension: 5 from 160
/// pixels up, fewer for small inputs (first s weights renormalized).
int ms_ssim_scales(int min_dimension);

/// MS-SSIM per batch item for [B,1,H,W] tensors in [0, data_range].
/// `floor` > 0 keeps per-scale terms away from zero so the result is
/// differentiable everywhere (training); 0 gives the exact metric.
torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b,
                      double data_range = 1.0, double floor = 0.0);

double ms_ssim(const Plane<std::uint8_t>& a, const Plane<std::uint8_t>& b);

enum class MetricPlanes { kY, kYuv };

/// Y-only, or the pixel-count weighted mean over Y, U and V (4:1:1).
double ms_ssim(const YuvFrame& a, const YuvFrame& b, MetricPlanes planes = MetricPlanes::kYuv);

/// 10*log10(255^2 / MSE); identical inputs give kPsnrCap.
double psnr(const Plane<std::uint8_t>& a, const Plane<std::uint8_t>& b);
double psnr(const YuvFrame& a, const YuvFrame& b, MetricPlanes planes = MetricPlanes::kYuv);

struct FrameScore {
  std::string identifier;
  std::size_t size = 0;  // pixel count
  double msssim = 0.0;
  double psnr_db = 0.0;
  std::uint64_t bits = 0;
  double bpp = 0.0;
  std::string mode;
  std::uint64_t mv_bits = 0;
};

enum class Metric { kMsSsim, kPsnr };

/// sum(score_i * size_i) / sum(size_i).
double aggregate_weighted(std::span<const FrameScore> scores, Metric metric);

}  // namespace devc
