#include "devc/motion.hpp"

#include <cmath>

#include "devc/error.hpp"

namespace devc {

namespace F = torch::nn::functional;

/// Largest correction (pixels of the finer grid) one upsampling step adds.
constexpr double kMaxStepCorrection = 2.0;

torch::Tensor warp(const torch::Tensor& plane, const torch::Tensor& flow) {
  const auto b = plane.size(0);
  const auto c = plane.size(1);
  const auto h = plane.size(2);
  const auto w = plane.size(3);
  if (flow.dim() != 4 || flow.size(0) != b || flow.size(1) != 2 || flow.size(2) != h ||
      flow.size(3) != w) {
    fail(ErrorKind::kInvalidGeometry, "flow shape does not match the warped plane");
  }
  const auto opts = flow.options();
  const auto gx = torch::arange(w, opts).view({1, w}).expand({h, w});
  const auto gy = torch::arange(h, opts).view({h, 1}).expand({h, w});
  const auto sx = (gx + flow.select(1, 0)).clamp(0, static_cast<double>(w - 1));
  const auto sy = (gy + flow.select(1, 1)).clamp(0, static_cast<double>(h - 1));
  const auto x0 = sx.floor();
  const auto y0 = sy.floor();
  const auto fx = (sx - x0).unsqueeze(1);
  const auto fy = (sy - y0).unsqueeze(1);
  const auto x0i = x0.to(torch::kLong);
  const auto y0i = y0.to(torch::kLong);
  const auto x1i = (x0i + 1).clamp_max(w - 1);
  const auto y1i = (y0i + 1).clamp_max(h - 1);

  const auto flat = plane.reshape({b, c, h * w});
  auto sample = [&](const torch::Tensor& yi, const torch::Tensor& xi) {
    const auto index = (yi * w + xi).reshape({b, 1, h * w}).expand({b, c, h * w});
    return flat.gather(2, index).reshape({b, c, h, w});
  };
  const auto v00 = sample(y0i, x0i);
  const auto v01 = sample(y0i, x1i);
  const auto v10 = sample(y1i, x0i);
  const auto v11 = sample(y1i, x1i);
  return v00 * ((1 - fx) * (1 - fy)) + v01 * (fx * (1 - fy)) + v10 * ((1 - fx) * fy) +
         v11 * (fx * fy);
}

torch::Tensor chroma_flow(const torch::Tensor& luma_flow) {
  return F::avg_pool2d(luma_flow, F::AvgPool2dFuncOptions(2)) * 0.5;
}

std::vector<torch::Tensor> image_pyramid(const torch::Tensor& x, int levels) {
  std::vector<torch::Tensor> out(levels);
  out[levels - 1] = x;
  for (int i = levels - 2; i >= 0; --i) {
    out[i] = F::avg_pool2d(out[i + 1], F::AvgPool2dFuncOptions(2));
  }
  return out;
}

torch::Tensor cost_volume(const torch::Tensor& f1, const torch::Tensor& f2, int radius) {
  const auto h = f1.size(2);
  const auto w = f1.size(3);
  const auto padded = F::pad(f2, F::PadFuncOptions({radius, radius, radius, radius}));
  std::vector<torch::Tensor> slices;
  slices.reserve((2 * radius + 1) * (2 * radius + 1));
  for (int dy = 0; dy <= 2 * radius; ++dy) {
    for (int dx = 0; dx <= 2 * radius; ++dx) {
      const auto shifted = padded.narrow(2, dy, h).narrow(3, dx, w);
      slices.push_back((f1 * shifted).mean(1));
    }
  }
  return torch::stack(slices, 1);
}

torch::Tensor me_loss(const FlowPyramid& pyramid,
                      const std::vector<torch::Tensor>& ref_pyramid,
                      const std::vector<torch::Tensor>& target_pyramid) {
  const auto d = pyramid.levels.size();
  if (d == 0 || ref_pyramid.size() != d || target_pyramid.size() != d) {
    fail(ErrorKind::kConfiguration, "flow, reference and target pyramids need the same "
                                    "non-zero number of levels");
  }
  torch::Tensor total;
  for (std::size_t i = 0; i < d; ++i) {
    auto level =
        torch::mse_loss(warp(ref_pyramid[i], pyramid.levels[i]), target_pyramid[i]);
    total = total.defined() ? total + level : level;
  }
  return total / static_cast<double>(d);
}

namespace {

torch::nn::Sequential flow_estimator(int in, int channels) {
  return torch::nn::Sequential(conv(in, channels, 3), torch::nn::LeakyReLU(
                                   torch::nn::LeakyReLUOptions().negative_slope(0.1)),
                               conv(channels, channels, 3),
                               torch::nn::LeakyReLU(
                                   torch::nn::LeakyReLUOptions().negative_slope(0.1)),
                               conv(channels, 2, 3));
}

constexpr int kMatchWindow = 5;
constexpr int kStepRadius = 2;

/// Negative patch SSD between target and the reference shifted by every
/// displacement in the window, divided by its mean over displacements.
torch::Tensor patch_cost(const torch::Tensor& target, const torch::Tensor& ref, int radius) {
  const auto h = target.size(2);
  const auto w = target.size(3);
  const auto padded = F::pad(ref, F::PadFuncOptions({radius, radius, radius, radius})
                                      .mode(torch::kReplicate));
  const auto box = F::AvgPool2dFuncOptions(kMatchWindow)
                       .stride(1)
                       .padding(kMatchWindow / 2)
                       .count_include_pad(false);
  std::vector<torch::Tensor> slices;
  for (int dy = 0; dy <= 2 * radius; ++dy) {
    for (int dx = 0; dx <= 2 * radius; ++dx) {
      const auto diff = target - padded.narrow(2, dy, h).narrow(3, dx, w);
      slices.push_back(F::avg_pool2d(diff.square().mean(1, true), box));
    }
  }
  const auto ssd = torch::cat(slices, 1);
  return -ssd / (ssd.mean(1, true) + 1e-8);
}

/// Expected displacement under softmax(scale * cost) over the search window.
torch::Tensor soft_argmin(const torch::Tensor& cost, int radius, const torch::Tensor& scale) {
  const int n = 2 * radius + 1;
  const auto p = torch::softmax(cost * scale, 1);
  const auto offsets = torch::arange(-radius, radius + 1, cost.options());
  const auto dx = offsets.repeat({n}).view({1, n * n, 1, 1});
  const auto dy = offsets.repeat_interleave(n).view({1, n * n, 1, 1});
  return torch::cat({(p * dx).sum(1, true), (p * dy).sum(1, true)}, 1);
}

}  // namespace

CoarseFlowNetImpl::CoarseFlowNetImpl(int channels, int radius)
    : radius_(radius),
      fine1_(register_module("fine1", conv(1, channels, 3))),
      fine2_(register_module("fine2", conv(channels, channels, 3))),
      coarse1_(register_module("coarse1", conv(channels, channels, 3, 2))),
      coarse2_(register_module("coarse2", conv(channels, channels, 3))) {
  const int taps = (2 * radius + 1) * (2 * radius + 1);
  coarse_estimator_ =
      register_module("coarse_estimator", flow_estimator(taps + channels + 2, channels));
  fine_estimator_ =
      register_module("fine_estimator", flow_estimator(taps + channels + 2, channels));
  for (auto* estimator : {&coarse_estimator_, &fine_estimator_}) {
    auto last = (*estimator)->ptr(4)->as<torch::nn::Conv2d>();
    torch::NoGradGuard guard;
    last->weight.zero_();
    last->bias.zero_();
  }
  log_temperature_ = register_parameter("log_temperature", torch::full({1}, std::log(4.0)));
}

std::pair<torch::Tensor, torch::Tensor> CoarseFlowNetImpl::features(const torch::Tensor& x) {
  auto fine = activation(fine2_(activation(fine1_(x))));
  auto coarse = activation(coarse2_(activation(coarse1_(fine))));
  return {fine, coarse};
}

torch::Tensor CoarseFlowNetImpl::forward(const torch::Tensor& ref,
                                         const torch::Tensor& target) {
  // Backward flow samples the reference, so target features are the anchor.
  const auto [t_fine, t_coarse] = features(target);
  const auto [r_fine, r_coarse] = features(ref);
  const auto scale = log_temperature_.exp();
  const auto half = F::AvgPool2dFuncOptions(2);

  // Each level: soft-argmin block matching on the images plus a learned
  // correction (starting at zero) from the feature correlation.
  const auto matched = soft_argmin(
      patch_cost(F::avg_pool2d(target, half), F::avg_pool2d(ref, half), radius_), radius_, scale);
  const auto cv = activation(cost_volume(t_coarse, r_coarse, radius_));
  const auto coarse_flow =
      matched + coarse_estimator_->forward(torch::cat({cv, t_coarse, matched}, 1));

  const auto up = 2.0 * F::interpolate(coarse_flow,
                                       F::InterpolateFuncOptions()
                                           .size(std::vector<int64_t>{t_fine.size(2), t_fine.size(3)})
                                           .mode(torch::kBilinear)
                                           .align_corners(false));
  const auto flow =
      up + soft_argmin(patch_cost(target, warp(ref, up), radius_), radius_, scale);
  const auto cv_fine = activation(cost_volume(t_fine, warp(r_fine, flow), radius_));
  return flow + fine_estimator_->forward(torch::cat({cv_fine, t_fine, flow}, 1));
}

FlowUpsampleStepImpl::FlowUpsampleStepImpl(int channels)
    : lift_(register_module("lift", deconv(2, channels, 3))),
      condition_(register_module("condition", conv(3, channels, 3))),
      mix_(register_module("mix", conv(channels, channels, 3))),
      out_(register_module("out", conv(channels, 2, 3))) {
  zero_init(out_);
  log_temperature_ = register_parameter("log_temperature", torch::full({1}, std::log(4.0)));
}

torch::Tensor FlowUpsampleStepImpl::forward(const torch::Tensor& coarse_flow,
                                            const torch::Tensor& ref,
                                            const torch::Tensor& target) {
  const auto size = std::vector<int64_t>{ref.size(2), ref.size(3)};
  auto up = 2.0 * F::interpolate(coarse_flow, F::InterpolateFuncOptions()
                                                  .size(size)
                                                  .mode(torch::kBilinear)
                                                  .align_corners(false));
  up = up + soft_argmin(patch_cost(target, warp(ref, up), kStepRadius), kStepRadius,
                        log_temperature_.exp());
  auto error = warp(ref, up) - target;
  auto lifted = crop(lift_(coarse_flow), static_cast<int>(size[0]), static_cast<int>(size[1]));
  auto h = activation(lifted + condition_(torch::cat({ref, target, error}, 1)));
  h = activation(mix_(h));
  return up + kMaxStepCorrection * torch::tanh(out_(h));
}

MotionRefineImpl::MotionRefineImpl(const LarbConfig& config)
    : head_(register_module("head", conv(2, config.channels, 3))),
      tail_(register_module("tail", conv(config.channels, 2, 3))),
      blocks_(register_module("blocks", torch::nn::Sequential())) {
  for (int i = 0; i < config.n_blocks; ++i) {
    blocks_->push_back(Larb(config.channels, config.attention_window));
  }
  zero_init(tail_);
}

torch::Tensor MotionRefineImpl::forward(const torch::Tensor& flow) {
  auto h = activation(head_(flow));
  if (!blocks_->is_empty()) h = blocks_->forward(h);
  return flow + tail_(h);
}

MotionEstimatorImpl::MotionEstimatorImpl(const MotionConfig& config)
    : config_(config),
      coarse_(register_module("coarse",
                              CoarseFlowNet(config.feature_channels, config.search_radius))),
      upsamplers_(register_module("upsamplers", torch::nn::ModuleList())),
      refine_(register_module("refine", MotionRefine(config.larb))) {
  for (int i = 1; i < config.levels; ++i) {
    upsamplers_->push_back(FlowUpsampleStep(config.upsampler_channels));
  }
}

FlowPyramid MotionEstimatorImpl::forward(const torch::Tensor& ref_luma,
                                         const torch::Tensor& target_luma) {
  if (ref_luma.sizes() != target_luma.sizes()) {
    fail(ErrorKind::kInvalidGeometry, "reference and target luma differ in shape");
  }
  const int levels = config_.levels;
  const int h = static_cast<int>(ref_luma.size(2));
  const int w = static_cast<int>(ref_luma.size(3));
  // The coarsest level is halved once more inside the flow net.
  const auto ref = pad_to_multiple(ref_luma, 1 << levels).tensor;
  const auto target = pad_to_multiple(target_luma, 1 << levels).tensor;
  const auto refs = image_pyramid(ref, levels);
  const auto targets = image_pyramid(target, levels);

  FlowPyramid pyramid;
  auto flow = coarse_->forward(refs[0], targets[0]);
  pyramid.levels.push_back(flow);
  for (int i = 1; i < levels; ++i) {
    flow = upsamplers_[i - 1]->as<FlowUpsampleStep>()->forward(flow, refs[i], targets[i]);
    pyramid.levels.push_back(flow);
  }
  pyramid.unrefined = pyramid.levels.back();
  pyramid.levels.back() = refine_(pyramid.unrefined);
  // Undo padding: each level keeps ceil(size / 2^(levels-1-i)).
  for (int i = 0; i < levels; ++i) {
    const int s = 1 << (levels - 1 - i);
    pyramid.levels[i] = crop(pyramid.levels[i], (h + s - 1) / s, (w + s - 1) / s);
  }
  pyramid.unrefined = crop(pyramid.unrefined, h, w);
  return pyramid;
}

}  // namespace devc
