#include "devc/layers.hpp"

#include <cmath>

namespace devc {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv(int in, int out, int kernel, int stride) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

torch::nn::ConvTranspose2d deconv(int in, int out, int kernel, int stride) {
  return torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, out, kernel)
                                        .stride(stride)
                                        .padding(kernel / 2)
                                        .output_padding(stride - 1));
}

void zero_init(torch::nn::Conv2d& layer) {
  torch::NoGradGuard guard;
  layer->weight.zero_();
  if (layer->bias.defined()) layer->bias.zero_();
}

ResBlockImpl::ResBlockImpl(int channels)
    : conv1_(register_module("conv1", conv(channels, channels, 3))),
      conv2_(register_module("conv2", conv(channels, channels, 3))) {}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  return x + conv2_(activation(conv1_(x)));
}

LocalAttentionImpl::LocalAttentionImpl(int channels, int window)
    : channels_(channels),
      window_(window),
      query_(register_module("query", conv(channels, channels, 1))),
      key_(register_module("key", conv(channels, channels, 1))),
      value_(register_module("value", conv(channels, channels, 1))) {}

torch::Tensor LocalAttentionImpl::forward(const torch::Tensor& x) {
  const auto h = x.size(2);
  const auto w = x.size(3);
  const int r = window_ / 2;
  // Taps outside the image see zero keys and values.
  const auto pad = F::PadFuncOptions({r, r, r, r});
  const auto q = query_(x) / std::sqrt(static_cast<double>(channels_));
  const auto k = F::pad(key_(x), pad);
  const auto v = F::pad(value_(x), pad);
  std::vector<torch::Tensor> logits;
  logits.reserve(window_ * window_);
  for (int dy = 0; dy < window_; ++dy) {
    for (int dx = 0; dx < window_; ++dx) {
      logits.push_back((q * k.narrow(2, dy, h).narrow(3, dx, w)).sum(1));
    }
  }
  const auto weights = torch::softmax(torch::stack(logits, 1), 1);
  torch::Tensor out;
  for (int dy = 0, t = 0; dy < window_; ++dy) {
    for (int dx = 0; dx < window_; ++dx, ++t) {
      auto term = weights.narrow(1, t, 1) * v.narrow(2, dy, h).narrow(3, dx, w);
      out = out.defined() ? out + term : term;
    }
  }
  return out;
}

LarbImpl::LarbImpl(int channels, int window)
    : conv1_(register_module("conv1", conv(channels, channels, 3))),
      conv2_(register_module("conv2", conv(channels, channels, 3))),
      attention_(register_module("attention", LocalAttention(channels, window))) {}

torch::Tensor LarbImpl::forward(const torch::Tensor& x) {
  auto body = conv2_(activation(conv1_(x)));
  return x + body * torch::sigmoid(attention_(body));
}

Padded pad_to_multiple(const torch::Tensor& x, int multiple) {
  const auto h = x.size(-2);
  const auto w = x.size(-1);
  Padded p;
  p.pad_bottom = static_cast<int>((multiple - h % multiple) % multiple);
  p.pad_right = static_cast<int>((multiple - w % multiple) % multiple);
  if (p.pad_bottom == 0 && p.pad_right == 0) {
    p.tensor = x;
    return p;
  }
  p.tensor = pad_edges(x, p.pad_right, p.pad_bottom);
  return p;
}

torch::Tensor pad_edges(const torch::Tensor& x, int pad_right, int pad_bottom) {
  if (pad_right == 0 && pad_bottom == 0) return x;
  auto options = F::PadFuncOptions({0, pad_right, 0, pad_bottom});
  // Reflection needs pad < size; fall back to edge replication otherwise.
  if (pad_bottom < x.size(-2) && pad_right < x.size(-1)) {
    options.mode(torch::kReflect);
  } else {
    options.mode(torch::kReplicate);
  }
  return F::pad(x, options);
}

torch::Tensor crop(const torch::Tensor& x, int height, int width) {
  return x.narrow(-2, 0, height).narrow(-1, 0, width);
}

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace devc
