#pragma once

// Sparse-signal compressor: strided conv analysis, attention-based channel
// reduction to the latent, hyperprior, and an autoregressive Gaussian-mixture
// context model. Used twice: 1-channel residuals and 2-channel flow fields.

#include <torch/torch.h>

#include <cstdint>
#include <span>
#include <vector>

#include "devc/config.hpp"
#include "devc/entropy.hpp"
#include "devc/layers.hpp"

namespace devc {

inline constexpr int kLatentStride = 16;
inline constexpr int kHyperStride = 4;
inline constexpr int kContextKernel = 5;
inline constexpr double kProbabilityFloor = 2e-6;
/// Hyper-latents are clamped to [kHyperMin, kHyperMax] for coding.
inline constexpr int kHyperMin = -32;
inline constexpr int kHyperMax = 31;
inline constexpr int kHyperSymbolBits = 6;

/// Latent tensor [B, C, h, w] on the stride-16 grid.
struct LatentBlock {
  torch::Tensor data;
  int stride = kLatentStride;
};

/// Per-sample entropy parameters. mu/sigma/p_plus are [B, C, h, w];
/// weights/means/scales are [B, C, K, h, w].
struct ContextParams {
  torch::Tensor mu;
  torch::Tensor sigma;
  torch::Tensor p_plus;
  torch::Tensor weights;
  torch::Tensor means;
  torch::Tensor scales;
};

enum class RateMode { kTrain, kBits };

/// Mixture probability mass of the unit bin centred on each sample.
torch::Tensor mixture_bin_mass(const torch::Tensor& y, const ContextParams& params);

/// Total bits. kTrain: -log2 of the mixture bin mass at `latents` (add the
/// uniform noise before calling). kBits: -log2 p(b) for b = sign(y - mu).
torch::Tensor estimate_rate(const LatentBlock& latents, const ContextParams& params,
                            RateMode mode);

/// Straight-through binary reconstruction mu + sigma * sign(y - mu):
/// the forward value is exact, mu and sigma get their true gradients and y
/// the gradient of sigma * tanh((y - mu) / sigma).
torch::Tensor binary_reconstruct(const torch::Tensor& y, const torch::Tensor& mu,
                                 const torch::Tensor& sigma);

/// Channel projection gated by a sigmoid spatial-channel mask.
class AttentionReduceImpl : public torch::nn::Module {
 public:
  AttentionReduceImpl(int in_channels, int out_channels);
  /// Returns {latent, mask}. With force_unit_mask the mask is all ones.
  std::pair<torch::Tensor, torch::Tensor> forward(const torch::Tensor& features,
                                                  bool force_unit_mask = false);

 private:
  torch::nn::Conv2d projection_{nullptr}, mask_hidden_{nullptr}, mask_out_{nullptr};
};
TORCH_MODULE(AttentionReduce);

/// Non-parametric per-channel density for the hyper-latent (cumulative
/// logits through small monotone per-channel networks).
class FactorizedPriorImpl : public torch::nn::Module {
 public:
  explicit FactorizedPriorImpl(int channels);
  /// Probability mass of the unit bin around every entry of z [B, C, h, w].
  torch::Tensor likelihood(const torch::Tensor& z);
  /// Masses [C, kHyperMax - kHyperMin + 1] for the integer coding alphabet.
  torch::Tensor integer_masses();

 private:
  torch::Tensor cumulative_logits(const torch::Tensor& x);  // x: [C, 1, N]

  int channels_;
  std::vector<torch::Tensor> matrices_, biases_, factors_;
};
TORCH_MODULE(FactorizedPrior);

/// Masked 5x5 convolution over the reconstructed latent followed by a
/// per-channel (grouped) parameter network fed with hyper features. Output
/// channel c sees input channels < c everywhere and channel c only at
/// positions that precede it in raster order.
class ContextModelImpl : public torch::nn::Module {
 public:
  explicit ContextModelImpl(const CompressorConfig& config);
  ContextParams forward(const torch::Tensor& y_hat, const torch::Tensor& hyper_features);

  const CompressorConfig& config() const { return config_; }
  torch::Tensor masked_weight() const { return context_weight_ * mask_; }
  const torch::Tensor& context_bias() const { return context_bias_; }
  torch::nn::Conv2d layer(int i) const { return i == 0 ? fc1_ : (i == 1 ? fc2_ : fc3_); }

 private:
  CompressorConfig config_;
  torch::Tensor context_weight_, context_bias_, mask_;
  torch::nn::Conv2d fc1_{nullptr}, fc2_{nullptr}, fc3_{nullptr};
};
TORCH_MODULE(ContextModel);

/// Parameters for one sample from the strictly sequential path.
struct SampleParams {
  float mu = 0.0f;
  float sigma = 1.0f;
  double p_plus = 0.5;
  std::vector<double> weights, means, scales;
};

/// Reference implementation of the context model for one latent block,
/// evaluated one sample at a time in coding order (channel-major, raster
/// within a channel). Used identically by encoder and decoder.
class SequentialContext {
 public:
  /// hyper_features: [1, C*F, h, w].
  SequentialContext(const ContextModelImpl& model, const torch::Tensor& hyper_features);

  /// prefix must hold exactly the k reconstructed samples preceding k.
  SampleParams at(std::span<const float> prefix, std::size_t k) const;

  std::size_t sample_count() const {
    return static_cast<std::size_t>(channels_) * height_ * width_;
  }
  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  int channels_, features_, mixtures_, hidden_, height_, width_;
  std::vector<float> context_weight_, context_bias_, hyper_;
  std::vector<float> w1_, b1_, w2_, b2_, w3_, b3_;
};

/// Everything the training graph needs from one forward pass.
struct CompressorOutput {
  torch::Tensor x_hat;
  torch::Tensor y;
  torch::Tensor y_hat;
  torch::Tensor z_hat;
  torch::Tensor mask;
  ContextParams params;
  torch::Tensor rate_latent_bits;  // mixture rate, train mode
  torch::Tensor rate_hyper_bits;
  torch::Tensor binary_bits;       // bits-mode estimate (trains the p head)

  torch::Tensor rate_bits() const { return rate_latent_bits + rate_hyper_bits; }
};

/// Result of coding one block of latents.
struct LatentCoding {
  torch::Tensor y_hat;      // [1, C, h, w]
  torch::Tensor z_hat;      // [1, Cz, hz, wz]
  double estimated_bits = 0.0;
  std::size_t symbols = 0;
};

class CompressorImpl : public torch::nn::Module {
 public:
  explicit CompressorImpl(const CompressorConfig& config);

  torch::Tensor analyze(const torch::Tensor& x);
  std::pair<torch::Tensor, torch::Tensor> attention_reduce(const torch::Tensor& features,
                                                           bool force_unit_mask = false);
  torch::Tensor synthesize(const torch::Tensor& y_hat, int height, int width);
  torch::Tensor hyper_encode(const torch::Tensor& y);
  torch::Tensor hyper_decode(const torch::Tensor& z_hat, int latent_h, int latent_w);

  /// Training/evaluation graph. `noisy` switches on uniform-noise relaxation.
  CompressorOutput forward(const torch::Tensor& x, bool noisy);

  /// Sequential binary coding of x [1, in, H, W] (H, W multiples of 16).
  /// Hyper symbols go to `hyper_out`, latent symbols to `latent_out` (may be
  /// the same writer).
  LatentCoding encode(const torch::Tensor& x, PayloadWriter& hyper_out,
                      PayloadWriter& latent_out);
  LatentCoding decode(PayloadReader& hyper_in, PayloadReader& latent_in, int height,
                      int width);

  const CompressorConfig& config() const { return config_; }
  ContextModel& context() { return context_; }
  FactorizedPrior& prior() { return prior_; }
  /// Reconstruction range for this signal kind.
  double lower_bound() const { return config_.in_channels == 2 ? 0.0 : -1.0; }
  double upper_bound() const { return 1.0; }

  /// Counts encode/decode invocations (instrumentation for tests).
  int coding_calls() const { return coding_calls_; }

 private:
  void code_hyper(const torch::Tensor& z_int, PayloadWriter* out, PayloadReader* in,
                  torch::Tensor* decoded, double* bits);

  CompressorConfig config_;
  torch::nn::ModuleList analysis_{nullptr}, synthesis_{nullptr};
  torch::nn::ModuleList hyper_analysis_{nullptr}, hyper_synthesis_{nullptr};
  AttentionReduce attention_{nullptr};
  FactorizedPrior prior_{nullptr};
  ContextModel context_{nullptr};
  int coding_calls_ = 0;
};
TORCH_MODULE(Compressor);

}  // namespace devc
