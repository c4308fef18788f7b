#pragma once

// Motion estimation: a coarse-to-fine correlation flow net run on
// 1/2^(levels-1) downsampled luma, learned hierarchical upsampling back to
// full resolution, and local-attention refinement of the final field.
//
// Flow tensors are [B, 2, H, W]; channel 0 is the horizontal and channel 1
// the vertical backward displacement in pixels of their own grid, so
// warp(ref, flow)(p) = ref(p + flow(p)).

#include <torch/torch.h>

#include <vector>

#include "devc/config.hpp"
#include "devc/layers.hpp"

namespace devc {

/// Backward bilinear warp with clamp-to-edge sampling.
torch::Tensor warp(const torch::Tensor& plane, const torch::Tensor& flow);

/// Flow for a half-resolution plane: 2x2 average, magnitudes halved.
torch::Tensor chroma_flow(const torch::Tensor& luma_flow);

/// Coarsest first: levels-1 successive 2x2 box downsamplings, then `x`.
std::vector<torch::Tensor> image_pyramid(const torch::Tensor& x, int levels);

/// Mean cross-correlation over channels for every displacement in the
/// (2r+1)^2 search window; zero outside the image.
torch::Tensor cost_volume(const torch::Tensor& f1, const torch::Tensor& f2, int radius);

struct FlowPyramid {
  /// Coarsest (1/2^(d-1)) to finest (full resolution).
  std::vector<torch::Tensor> levels;
  /// Finest level before local-attention refinement.
  torch::Tensor unrefined;

  int depth() const { return static_cast<int>(levels.size()); }
  const torch::Tensor& finest() const { return levels.back(); }
};

/// (1/d) * sum_i MSE(warp(ref_i, flow_i), target_i).
torch::Tensor me_loss(const FlowPyramid& pyramid,
                      const std::vector<torch::Tensor>& ref_pyramid,
                      const std::vector<torch::Tensor>& target_pyramid);

/// Two-level correlation flow estimator with feature warping between levels.
class CoarseFlowNetImpl : public torch::nn::Module {
 public:
  CoarseFlowNetImpl(int channels, int radius);
  torch::Tensor forward(const torch::Tensor& ref, const torch::Tensor& target);

 private:
  std::pair<torch::Tensor, torch::Tensor> features(const torch::Tensor& x);

  int radius_;
  torch::nn::Conv2d fine1_{nullptr}, fine2_{nullptr}, coarse1_{nullptr}, coarse2_{nullptr};
  torch::nn::Sequential coarse_estimator_{nullptr}, fine_estimator_{nullptr};
  torch::Tensor log_temperature_;
};
TORCH_MODULE(CoarseFlowNet);

/// One x2 step of the hierarchical upsampler. The coarse flow enters through
/// a transposed convolution; the warped error at the new scale conditions
/// the correction.
class FlowUpsampleStepImpl : public torch::nn::Module {
 public:
  explicit FlowUpsampleStepImpl(int channels);
  torch::Tensor forward(const torch::Tensor& coarse_flow, const torch::Tensor& ref,
                        const torch::Tensor& target);

 private:
  torch::nn::ConvTranspose2d lift_{nullptr};
  torch::nn::Conv2d condition_{nullptr}, mix_{nullptr}, out_{nullptr};
  torch::Tensor log_temperature_;
};
TORCH_MODULE(FlowUpsampleStep);

/// Residual LARB stack on a flow field; the zero-initialized tail makes it
/// the identity until trained.
class MotionRefineImpl : public torch::nn::Module {
 public:
  explicit MotionRefineImpl(const LarbConfig& config);
  torch::Tensor forward(const torch::Tensor& flow);

 private:
  torch::nn::Conv2d head_{nullptr}, tail_{nullptr};
  torch::nn::Sequential blocks_{nullptr};
};
TORCH_MODULE(MotionRefine);

class MotionEstimatorImpl : public torch::nn::Module {
 public:
  explicit MotionEstimatorImpl(const MotionConfig& config);

  /// Luma planes [B,1,H,W] in [0,1]. The last level is the refined flow.
  FlowPyramid forward(const torch::Tensor& ref_luma, const torch::Tensor& target_luma);

  torch::Tensor refine(const torch::Tensor& raw_flow) { return refine_(raw_flow); }
  int levels() const { return config_.levels; }
  const MotionConfig& config() const { return config_; }

 private:
  MotionConfig config_;
  CoarseFlowNet coarse_{nullptr};
  torch::nn::ModuleList upsamplers_{nullptr};
  MotionRefine refine_{nullptr};
};
TORCH_MODULE(MotionEstimator);

}  // namespace devc
