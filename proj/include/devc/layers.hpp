#pragma once

// Building blocks shared by the motion, compressor and refine networks.

#include <torch/torch.h>

namespace devc {

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1);
/// Transposed convolution that exactly doubles (stride 2) the spatial size.
torch::nn::ConvTranspose2d deconv(int in, int out, int kernel, int stride = 2);

void zero_init(torch::nn::Conv2d& layer);

inline torch::Tensor activation(const torch::Tensor& x) {
  return torch::leaky_relu(x, 0.1);
}

/// x + conv(act(conv(x))).
class ResBlockImpl : public torch::nn::Module {
 public:
  explicit ResBlockImpl(int channels);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
};
TORCH_MODULE(ResBlock);

/// Softmax attention of every pixel over its window x window neighbourhood.
class LocalAttentionImpl : public torch::nn::Module {
 public:
  LocalAttentionImpl(int channels, int window);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int channels_;
  int window_;
  torch::nn::Conv2d query_{nullptr}, key_{nullptr}, value_{nullptr};
};
TORCH_MODULE(LocalAttention);

/// Local-attention residual block: a residual conv pair whose output is
/// re-weighted by windowed spatial attention before the skip addition.
class LarbImpl : public torch::nn::Module {
 public:
  LarbImpl(int channels, int window);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr};
  LocalAttention attention_{nullptr};
};
TORCH_MODULE(Larb);

/// Reflect-pads the two trailing dims up to multiples of `multiple`.
struct Padded {
  torch::Tensor tensor;
  int pad_right = 0;
  int pad_bottom = 0;
};
Padded pad_to_multiple(const torch::Tensor& x, int multiple);
/// Pads right/bottom by reflection, or edge replication when too short.
torch::Tensor pad_edges(const torch::Tensor& x, int pad_right, int pad_bottom);
torch::Tensor crop(const torch::Tensor& x, int height, int width);

std::int64_t parameter_count(const torch::nn::Module& module);

}  // namespace devc
