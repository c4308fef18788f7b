#include "devc/refine.hpp"

#include "devc/error.hpp"

namespace devc {

namespace F = torch::nn::functional;

namespace {

// Flow enters the motion refine-net in units of this many pixels.
constexpr double kFlowScale = 4.0;

}  // namespace

RefineNetImpl::RefineNetImpl(const RefineNetConfig& config) : config_(config) {
  config.validate();
  const int ch = config.channels;
  head_ = register_module("head", conv(config.in_channels, ch, 3));
  down_ = register_module("down", torch::nn::ModuleList());
  encoder_blocks_ = register_module("encoder_blocks", torch::nn::ModuleList());
  decoder_blocks_ = register_module("decoder_blocks", torch::nn::ModuleList());
  for (int s = 0; s < config.scales; ++s) {
    torch::nn::Sequential enc;
    for (int b = 0; b < config.n_resblocks; ++b) enc->push_back(ResBlock(ch));
    encoder_blocks_->push_back(enc);
    if (s + 1 < config.scales) {
      down_->push_back(conv(ch, ch, 3, 2));
      torch::nn::Sequential dec;
      for (int b = 0; b < config.n_resblocks; ++b) dec->push_back(ResBlock(ch));
      decoder_blocks_->push_back(dec);
    }
  }
  tail_ = register_module("tail", conv(ch, config.out_channels, 3));
  zero_init(tail_);
}

torch::Tensor RefineNetImpl::forward(const torch::Tensor& x) {
  const int scales = config_.scales;
  const int multiple = 1 << (scales - 1);
  const int height = static_cast<int>(x.size(2));
  const int width = static_cast<int>(x.size(3));
  auto h = activation(head_(pad_to_multiple(x, multiple).tensor));

  std::vector<torch::Tensor> skips;
  for (int s = 0; s < scales; ++s) {
    auto& enc = *encoder_blocks_[s]->as<torch::nn::SequentialImpl>();
    if (!enc.is_empty()) h = enc.forward(h);
    if (s + 1 < scales) {
      skips.push_back(h);
      h = activation(down_[s]->as<torch::nn::Conv2dImpl>()->forward(h));
    }
  }
  for (int s = scales - 2; s >= 0; --s) {
    const auto& skip = skips[s];
    h = F::interpolate(h, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false)) +
        skip;
    auto& dec = *decoder_blocks_[s]->as<torch::nn::SequentialImpl>();
    if (!dec.is_empty()) h = dec.forward(h);
  }
  return crop(tail_(h), height, width);
}

torch::Tensor refine_frame(RefineNet& net, const torch::Tensor& warped,
                           const torch::Tensor& residual_hat) {
  if (warped.sizes() != residual_hat.sizes()) {
    fail(ErrorKind::kInvalidGeometry, "warped prediction and residual differ in shape");
  }
  const auto intermediate = warped + residual_hat;
  const auto correction = net->forward(torch::cat({intermediate, residual_hat}, 1));
  return (intermediate + correction).clamp(0.0, 1.0);
}

torch::Tensor refine_decoded_motion(RefineNet& net, const torch::Tensor& decoded_flow) {
  if (decoded_flow.dim() != 4 || decoded_flow.size(1) != 2) {
    fail(ErrorKind::kInvalidGeometry, "decoded flow must be [B,2,H,W]");
  }
  return decoded_flow + kFlowScale * net->forward(decoded_flow / kFlowScale);
}

}  // namespace devc
