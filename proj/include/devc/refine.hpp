#pragma once

#include <torch/torch.h>

#include "devc/config.hpp"
#include "devc/layers.hpp"

namespace devc {

/// Multi-scale residual network (3x3 convs, stride-2 downsampling, bilinear
/// upsampling with additive skips). Its output is a correction whose final
/// layer starts at zero.
class RefineNetImpl : public torch::nn::Module {
 public:
  explicit RefineNetImpl(const RefineNetConfig& config);
  torch::Tensor forward(const torch::Tensor& x);
  const RefineNetConfig& config() const { return config_; }

 private:
  RefineNetConfig config_;
  torch::nn::Conv2d head_{nullptr}, tail_{nullptr};
  torch::nn::ModuleList down_{nullptr};
  torch::nn::ModuleList encoder_blocks_{nullptr}, decoder_blocks_{nullptr};
};
TORCH_MODULE(RefineNet);

/// Final reconstruction from the warped prediction and decoded residual
/// ([B,1,H,W], unit scale). The net sees (prediction + residual, residual)
/// and corrects the sum; the result is clamped to [0,1].
torch::Tensor refine_frame(RefineNet& net, const torch::Tensor& warped,
                           const torch::Tensor& residual_hat);

/// Residual correction of a decoded flow field [B,2,H,W] in pixels.
torch::Tensor refine_decoded_motion(RefineNet& net, const torch::Tensor& decoded_flow);

}  // namespace devc
