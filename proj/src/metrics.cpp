#include "devc/metrics.hpp"

#include <cmath>

#include "devc/error.hpp"

namespace devc {

namespace F = torch::nn::functional;

namespace {

torch::Tensor gaussian_window(int size, const torch::TensorOptions& opts) {
  const double sigma = 1.5 * size / 11.0;
  auto x = torch::arange(size, opts) - (size - 1) / 2.0;
  auto g = torch::exp(-(x * x) / (2.0 * sigma * sigma));
  g = g / g.sum();
  return (g.view({size, 1}) * g.view({1, size})).view({1, 1, size, size});
}

torch::Tensor plane_tensor(const Plane<std::uint8_t>& p) {
  auto t = torch::empty({1, 1, p.height, p.width}, torch::kDouble);
  auto* d = t.data_ptr<double>();
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = p.data[i] / 255.0;
  return t;
}

void require_same(int aw, int ah, int bw, int bh) {
  if (aw != bw || ah != bh) {
    fail(ErrorKind::kInvalidGeometry, "metric inputs differ in shape");
  }
}

}  // namespace

int ms_ssim_scales(int min_dimension) {
  if (min_dimension < 16) {
    fail(ErrorKind::kInvalidGeometry, "MS-SSIM needs a minimum dimension of 16");
  }
  int scales = 1;
  while (scales < 5 && min_dimension >= 10 * (1 << scales)) ++scales;
  return scales;
}

torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b, double data_range,
                      double floor) {
  if (a.sizes() != b.sizes() || a.dim() != 4 || a.size(1) != 1) {
    fail(ErrorKind::kInvalidGeometry, "MS-SSIM inputs must share a [B,1,H,W] shape");
  }
  const int scales = ms_ssim_scales(static_cast<int>(std::min(a.size(2), a.size(3))));
  // Canonical weights at full depth; truncated sets are renormalized.
  double weight_sum = 1.0;
  if (scales < static_cast<int>(kMsSsimWeights.size())) {
    weight_sum = 0.0;
    for (int s = 0; s < scales; ++s) weight_sum += kMsSsimWeights[s];
  }
  const double c1 = std::pow(0.01 * data_range, 2);
  const double c2 = std::pow(0.03 * data_range, 2);

  auto x = a;
  auto y = b;
  torch::Tensor result;
  for (int s = 0; s < scales; ++s) {
    const int size = static_cast<int>(std::min<int64_t>({11, x.size(2), x.size(3)}));
    const auto window = gaussian_window(size, x.options());
    auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, window); };
    const auto mu_x = filt(x);
    const auto mu_y = filt(y);
    const auto sxx = filt(x * x) - mu_x * mu_x;
    const auto syy = filt(y * y) - mu_y * mu_y;
    const auto sxy = filt(x * y) - mu_x * mu_y;
    const auto cs_map = (2.0 * sxy + c2) / (sxx + syy + c2);
    torch::Tensor term;
    if (s + 1 < scales) {
      term = cs_map.mean({1, 2, 3});
    } else {
      const auto l_map = (2.0 * mu_x * mu_y + c1) / (mu_x * mu_x + mu_y * mu_y + c1);
      term = (l_map * cs_map).mean({1, 2, 3});
    }
    term = floor > 0.0 ? term.clamp_min(floor) : torch::relu(term);
    const auto factor = torch::pow(term, kMsSsimWeights[s] / weight_sum);
    result = result.defined() ? result * factor : factor;
    if (s + 1 < scales) {
      x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
      y = F::avg_pool2d(y, F::AvgPool2dFuncOptions(2));
    }
  }
  return result;
}

double ms_ssim(const Plane<std::uint8_t>& a, const Plane<std::uint8_t>& b) {
  require_same(a.width, a.height, b.width, b.height);
  torch::NoGradGuard guard;
  return ms_ssim(plane_tensor(a), plane_tensor(b)).item<double>();
}

double ms_ssim(const YuvFrame& a, const YuvFrame& b, MetricPlanes planes) {
  require_same(a.width(), a.height(), b.width(), b.height());
  const double y = ms_ssim(a.y, b.y);
  if (planes == MetricPlanes::kY) return y;
  return (4.0 * y + ms_ssim(a.u, b.u) + ms_ssim(a.v, b.v)) / 6.0;
}

double psnr(const Plane<std::uint8_t>& a, const Plane<std::uint8_t>& b) {
  require_same(a.width, a.height, b.width, b.height);
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sse += d * d;
  }
  if (sse == 0.0) return kPsnrCap;
  const double mse = sse / static_cast<double>(a.size());
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double psnr(const YuvFrame& a, const YuvFrame& b, MetricPlanes planes) {
  require_same(a.width(), a.height(), b.width(), b.height());
  const double y = psnr(a.y, b.y);
  if (planes == MetricPlanes::kY) return y;
  return (4.0 * y + psnr(a.u, b.u) + psnr(a.v, b.v)) / 6.0;
}

double aggregate_weighted(std::span<const FrameScore> scores, Metric metric) {
  if (scores.empty()) fail(ErrorKind::kUsage, "cannot aggregate an empty score list");
  double weighted = 0.0;
  double total = 0.0;
  for (const auto& s : scores) {
    const double size = static_cast<double>(s.size);
    weighted += (metric == Metric::kMsSsim ? s.msssim : s.psnr_db) * size;
    total += size;
  }
  return weighted / total;
}

}  // namespace devc
