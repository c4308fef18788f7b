#include "devc/compressor.hpp"

#include <cmath>

#include "devc/error.hpp"

namespace devc {

namespace F = torch::nn::functional;

namespace {

constexpr double kMassFloor = 1e-9;
constexpr double kMinScale = 0.01;
constexpr int kMaxContextPasses = 64;

torch::Tensor normal_cdf(const torch::Tensor& x) {
  return 0.5 * torch::erfc(-x * M_SQRT1_2);
}

torch::Tensor run(torch::nn::ModuleList& layers, torch::Tensor x) {
  const auto n = layers->size();
  for (std::size_t i = 0; i < n; ++i) {
    if (auto* c = layers[i]->as<torch::nn::Conv2dImpl>()) {
      x = c->forward(x);
    } else {
      x = layers[i]->as<torch::nn::ConvTranspose2dImpl>()->forward(x);
    }
    if (i + 1 < n) x = activation(x);
  }
  return x;
}

double leaky(double v) { return v >= 0.0 ? v : 0.1 * v; }

std::vector<float> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat).contiguous();
  return {c.data_ptr<float>(), c.data_ptr<float>() + c.numel()};
}

}  // namespace

torch::Tensor mixture_bin_mass(const torch::Tensor& y, const ContextParams& params) {
  const auto centered = y.unsqueeze(2) - params.means;
  const auto upper = (centered + 0.5) / params.scales;
  const auto lower = (centered - 0.5) / params.scales;
  // Evaluate in the lower tail where the difference is better conditioned.
  const auto sign = -torch::sign(upper + lower).detach();
  const auto sign_nz = torch::where(sign == 0, torch::ones_like(sign), sign);
  const auto per_component =
      torch::abs(normal_cdf(sign_nz * upper) - normal_cdf(sign_nz * lower));
  return (params.weights * per_component).sum(2).clamp_min(kMassFloor);
}

torch::Tensor estimate_rate(const LatentBlock& latents, const ContextParams& params,
                            RateMode mode) {
  if (mode == RateMode::kTrain) {
    return -torch::log2(mixture_bin_mass(latents.data, params)).sum();
  }
  const auto plus = latents.data >= params.mu;
  const auto p = torch::where(plus, params.p_plus, 1.0 - params.p_plus);
  return -torch::log2(p).sum();
}

torch::Tensor binary_reconstruct(const torch::Tensor& y, const torch::Tensor& mu,
                                 const torch::Tensor& sigma) {
  const auto sign = torch::where(y >= mu, torch::ones_like(y), -torch::ones_like(y)).detach();
  // Value mu + sigma * b. y is differentiated through
  // sigma * tanh((y - mu) / sigma), which stops pushing once y is well past mu.
  const auto soft = sigma.detach() * torch::tanh((y - mu.detach()) / sigma.detach());
  return (mu + sigma * sign).detach() + (soft - soft.detach());
}

AttentionReduceImpl::AttentionReduceImpl(int in_channels, int out_channels)
    : projection_(register_module("projection", conv(in_channels, out_channels, 1))),
      mask_hidden_(register_module("mask_hidden", conv(in_channels, out_channels, 3))),
      mask_out_(register_module("mask_out", conv(out_channels, out_channels, 1))) {}

std::pair<torch::Tensor, torch::Tensor> AttentionReduceImpl::forward(
    const torch::Tensor& features, bool force_unit_mask) {
  const auto projected = projection_(features);
  if (force_unit_mask) return {projected, torch::ones_like(projected)};
  const auto mask = torch::sigmoid(mask_out_(activation(mask_hidden_(features))));
  return {projected * mask, mask};
}

FactorizedPriorImpl::FactorizedPriorImpl(int channels) : channels_(channels) {
  const std::vector<int> dims{1, 3, 3, 3, 1};
  const double init_scale = std::pow(10.0, 1.0 / (dims.size() - 1));
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double init = std::log(std::expm1(1.0 / init_scale / dims[i + 1]));
    matrices_.push_back(register_parameter(
        "matrix" + std::to_string(i), torch::full({channels, dims[i + 1], dims[i]}, init)));
    biases_.push_back(register_parameter(
        "bias" + std::to_string(i),
        torch::rand({channels, dims[i + 1], 1}) - 0.5));
    if (i + 2 < dims.size()) {
      factors_.push_back(register_parameter("factor" + std::to_string(i),
                                            torch::zeros({channels, dims[i + 1], 1})));
    }
  }
}

torch::Tensor FactorizedPriorImpl::cumulative_logits(const torch::Tensor& x) {
  auto logits = x;
  for (std::size_t i = 0; i < matrices_.size(); ++i) {
    logits = torch::matmul(F::softplus(matrices_[i]), logits) + biases_[i];
    if (i < factors_.size()) logits = logits + torch::tanh(factors_[i]) * torch::tanh(logits);
  }
  return logits;
}

torch::Tensor FactorizedPriorImpl::likelihood(const torch::Tensor& z) {
  const auto b = z.size(0);
  const auto h = z.size(2);
  const auto w = z.size(3);
  const auto flat = z.permute({1, 0, 2, 3}).reshape({channels_, 1, b * h * w});
  const auto lower = cumulative_logits(flat - 0.5);
  const auto upper = cumulative_logits(flat + 0.5);
  const auto sign = -torch::sign(lower + upper).detach();
  const auto sign_nz = torch::where(sign == 0, torch::ones_like(sign), sign);
  const auto lik =
      torch::abs(torch::sigmoid(sign_nz * upper) - torch::sigmoid(sign_nz * lower));
  return lik.clamp_min(kMassFloor).reshape({channels_, b, h, w}).permute({1, 0, 2, 3});
}

torch::Tensor FactorizedPriorImpl::integer_masses() {
  const auto opts = matrices_.front().options();
  const auto values = torch::arange(kHyperMin, kHyperMax + 1, opts);
  const auto z = values.view({1, 1, 1, -1}).expand({1, channels_, 1, values.size(0)});
  return likelihood(z).reshape({channels_, values.size(0)});
}

ContextModelImpl::ContextModelImpl(const CompressorConfig& config) : config_(config) {
  const int c = config.latent_channels;
  const int f = config.context_features;
  const int hidden = config.entropy_hidden;
  const int k = config.mixture_components;
  constexpr int kk = kContextKernel;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c * kk * kk));
  context_weight_ = register_parameter(
      "context_weight", (torch::rand({c * f, c, kk, kk}) * 2 - 1) * bound);
  context_bias_ = register_parameter("context_bias", torch::zeros({c * f}));
  auto mask = torch::zeros({c * f, c, kk, kk});
  {
    auto acc = mask.accessor<float, 4>();
    for (int out = 0; out < c; ++out) {
      for (int j = 0; j < f; ++j) {
        for (int in = 0; in <= out; ++in) {
          for (int dy = 0; dy < kk; ++dy) {
            for (int dx = 0; dx < kk; ++dx) {
              const bool before = dy < kk / 2 || (dy == kk / 2 && dx < kk / 2);
              if (in < out || before) acc[out * f + j][in][dy][dx] = 1.0f;
            }
          }
        }
      }
    }
  }
  mask_ = register_buffer("mask", mask);
  fc1_ = register_module(
      "fc1", torch::nn::Conv2d(torch::nn::Conv2dOptions(c * 2 * f, c * hidden, 1).groups(c)));
  fc2_ = register_module(
      "fc2", torch::nn::Conv2d(torch::nn::Conv2dOptions(c * hidden, c * hidden, 1).groups(c)));
  fc3_ = register_module("fc3", torch::nn::Conv2d(torch::nn::Conv2dOptions(
                                                      c * hidden, c * (3 * k + 1), 1)
                                                      .groups(c)));
}

ContextParams ContextModelImpl::forward(const torch::Tensor& y_hat,
                                        const torch::Tensor& hyper_features) {
  const int c = config_.latent_channels;
  const int f = config_.context_features;
  const int k = config_.mixture_components;
  const auto b = y_hat.size(0);
  const auto h = y_hat.size(2);
  const auto w = y_hat.size(3);
  const auto ctx = F::conv2d(y_hat, context_weight_ * mask_,
                             F::Conv2dFuncOptions().bias(context_bias_).padding(kContextKernel / 2));
  const auto stacked =
      torch::cat({ctx.view({b, c, f, h, w}), hyper_features.view({b, c, f, h, w})}, 2)
          .view({b, c * 2 * f, h, w});
  const auto raw = fc3_(activation(fc2_(activation(fc1_(stacked))))).view({b, c, 3 * k + 1, h, w});

  ContextParams p;
  p.weights = torch::softmax(raw.narrow(2, 0, k), 2);
  p.means = raw.narrow(2, k, k);
  p.scales = F::softplus(raw.narrow(2, 2 * k, k)) + kMinScale;
  p.mu = (p.weights * p.means).sum(2);
  const auto spread = p.means - p.mu.unsqueeze(2);
  p.sigma = torch::sqrt((p.weights * (p.scales * p.scales + spread * spread)).sum(2));
  p.p_plus = kProbabilityFloor + (1.0 - 2.0 * kProbabilityFloor) * torch::sigmoid(raw.select(2, 3 * k));
  return p;
}

SequentialContext::SequentialContext(const ContextModelImpl& model,
                                     const torch::Tensor& hyper_features)
    : channels_(model.config().latent_channels),
      features_(model.config().context_features),
      mixtures_(model.config().mixture_components),
      hidden_(model.config().entropy_hidden),
      height_(static_cast<int>(hyper_features.size(2))),
      width_(static_cast<int>(hyper_features.size(3))) {
  torch::NoGradGuard guard;
  if (hyper_features.size(0) != 1 || hyper_features.size(1) != channels_ * features_) {
    fail(ErrorKind::kConfiguration, "hyper features do not match the context model");
  }
  context_weight_ = to_vector(model.masked_weight());
  context_bias_ = to_vector(model.context_bias());
  hyper_ = to_vector(hyper_features);
  w1_ = to_vector(model.layer(0)->weight);
  b1_ = to_vector(model.layer(0)->bias);
  w2_ = to_vector(model.layer(1)->weight);
  b2_ = to_vector(model.layer(1)->bias);
  w3_ = to_vector(model.layer(2)->weight);
  b3_ = to_vector(model.layer(2)->bias);
}

SampleParams SequentialContext::at(std::span<const float> prefix, std::size_t k) const {
  if (prefix.size() != k || k >= sample_count()) {
    fail(ErrorKind::kProtocol, "context prefix holds " + std::to_string(prefix.size()) +
                                   " samples for index " + std::to_string(k));
  }
  const int plane = height_ * width_;
  const int c = static_cast<int>(k / plane);
  const int i = static_cast<int>((k % plane) / width_);
  const int j = static_cast<int>(k % width_);
  constexpr int kk = kContextKernel;
  constexpr int half = kk / 2;

  std::vector<double> input(2 * features_);
  for (int f = 0; f < features_; ++f) {
    const int out = c * features_ + f;
    double acc = context_bias_[out];
    for (int in = 0; in <= c; ++in) {
      const float* wrow = &context_weight_[(static_cast<std::size_t>(out) * channels_ + in) * kk * kk];
      for (int dy = 0; dy < kk; ++dy) {
        const int y = i + dy - half;
        if (y < 0 || y >= height_) continue;
        for (int dx = 0; dx < kk; ++dx) {
          if (in == c && !(dy < half || (dy == half && dx < half))) continue;
          const int x = j + dx - half;
          if (x < 0 || x >= width_) continue;
          acc += static_cast<double>(wrow[dy * kk + dx]) *
                 prefix[(static_cast<std::size_t>(in) * height_ + y) * width_ + x];
        }
      }
    }
    input[f] = acc;
    input[features_ + f] = hyper_[(static_cast<std::size_t>(out) * height_ + i) * width_ + j];
  }

  auto dense = [&](const std::vector<double>& in, const std::vector<float>& weight,
                   const std::vector<float>& bias, int out_per_group, bool act) {
    const int in_per_group = static_cast<int>(in.size());
    std::vector<double> out(out_per_group);
    for (int o = 0; o < out_per_group; ++o) {
      const int row = c * out_per_group + o;
      double acc = bias[row];
      for (int q = 0; q < in_per_group; ++q) {
        acc += static_cast<double>(weight[static_cast<std::size_t>(row) * in_per_group + q]) * in[q];
      }
      out[o] = act ? leaky(acc) : acc;
    }
    return out;
  };
  const auto h1 = dense(input, w1_, b1_, hidden_, true);
  const auto h2 = dense(h1, w2_, b2_, hidden_, true);
  const auto raw = dense(h2, w3_, b3_, 3 * mixtures_ + 1, false);

  SampleParams p;
  p.weights.resize(mixtures_);
  p.means.resize(mixtures_);
  p.scales.resize(mixtures_);
  double max_logit = raw[0];
  for (int m = 1; m < mixtures_; ++m) max_logit = std::max(max_logit, raw[m]);
  double norm = 0.0;
  for (int m = 0; m < mixtures_; ++m) {
    p.weights[m] = std::exp(raw[m] - max_logit);
    norm += p.weights[m];
  }
  double mu = 0.0;
  for (int m = 0; m < mixtures_; ++m) {
    p.weights[m] /= norm;
    p.means[m] = raw[mixtures_ + m];
    const double r = raw[2 * mixtures_ + m];
    p.scales[m] = (r > 20.0 ? r : std::log1p(std::exp(r))) + kMinScale;
    mu += p.weights[m] * p.means[m];
  }
  double var = 0.0;
  for (int m = 0; m < mixtures_; ++m) {
    const double d = p.means[m] - mu;
    var += p.weights[m] * (p.scales[m] * p.scales[m] + d * d);
  }
  p.mu = static_cast<float>(mu);
  p.sigma = static_cast<float>(std::sqrt(var));
  const double logit = raw[3 * mixtures_];
  p.p_plus = kProbabilityFloor + (1.0 - 2.0 * kProbabilityFloor) / (1.0 + std::exp(-logit));
  return p;
}

CompressorImpl::CompressorImpl(const CompressorConfig& config) : config_(config) {
  config.validate();
  const int n = config.internal_channels;
  const int e = config.encoder_out_channels;
  const int l = config.latent_channels;
  const int z = config.hyper_channels;
  analysis_ = register_module(
      "analysis", torch::nn::ModuleList(conv(config.in_channels, n, 5, 2), conv(n, n, 5, 2),
                                        conv(n, n, 5, 2), conv(n, e, 5, 2)));
  if (config.attention) attention_ = register_module("attention", AttentionReduce(e, l));
  synthesis_ = register_module(
      "synthesis", torch::nn::ModuleList(deconv(l, n, 5), deconv(n, n, 5), deconv(n, n, 5),
                                         deconv(n, config.in_channels, 5)));
  hyper_analysis_ = register_module(
      "hyper_analysis",
      torch::nn::ModuleList(conv(l, z, 3), conv(z, z, 5, 2), conv(z, z, 5, 2)));
  hyper_synthesis_ = register_module(
      "hyper_synthesis", torch::nn::ModuleList(deconv(z, z, 5), deconv(z, z, 5),
                                               conv(z, l * config.context_features, 3)));
  prior_ = register_module("prior", FactorizedPrior(z));
  context_ = register_module("context", ContextModel(config));
}

torch::Tensor CompressorImpl::analyze(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != config_.in_channels) {
    fail(ErrorKind::kConfiguration,
         "compressor expects " + std::to_string(config_.in_channels) + " input channels, got " +
             (x.dim() == 4 ? std::to_string(x.size(1)) : std::string("a non-4D tensor")));
  }
  const double centre = 0.5 * (lower_bound() + upper_bound());
  return run(analysis_, (x - centre) * config_.signal_gain);
}

std::pair<torch::Tensor, torch::Tensor> CompressorImpl::attention_reduce(
    const torch::Tensor& features, bool force_unit_mask) {
  if (features.size(1) != config_.encoder_out_channels) {
    fail(ErrorKind::kConfiguration, "attention expects encoder_out_channels features");
  }
  if (!attention_) return {features, torch::ones_like(features)};
  return attention_->forward(features, force_unit_mask);
}

torch::Tensor CompressorImpl::synthesize(const torch::Tensor& y_hat, int height, int width) {
  if (y_hat.size(1) != config_.latent_channels) {
    fail(ErrorKind::kConfiguration, "synthesis expects " +
                                        std::to_string(config_.latent_channels) +
                                        " latent channels");
  }
  const double centre = 0.5 * (lower_bound() + upper_bound());
  const auto out = crop(run(synthesis_, y_hat), height, width) / config_.signal_gain + centre;
  return out.clamp(lower_bound(), upper_bound());
}

torch::Tensor CompressorImpl::hyper_encode(const torch::Tensor& y) {
  if (y.size(2) < kHyperStride || y.size(3) < kHyperStride) {
    fail(ErrorKind::kConfiguration, "latent grid must be at least 4x4 for the hyperprior");
  }
  return run(hyper_analysis_, y);
}

torch::Tensor CompressorImpl::hyper_decode(const torch::Tensor& z_hat, int latent_h,
                                           int latent_w) {
  return crop(run(hyper_synthesis_, z_hat), latent_h, latent_w);
}

CompressorOutput CompressorImpl::forward(const torch::Tensor& x, bool noisy) {
  const int height = static_cast<int>(x.size(2));
  const int width = static_cast<int>(x.size(3));
  const auto padded = pad_to_multiple(x, kLatentStride).tensor;
  CompressorOutput out;
  std::tie(out.y, out.mask) = attention_reduce(analyze(padded));
  const int h = static_cast<int>(out.y.size(2));
  const int w = static_cast<int>(out.y.size(3));

  const auto z = hyper_encode(out.y);
  // The context always sees rounded hyper-latents (straight-through), as at
  // inference; the noisy copy only prices them.
  out.z_hat = torch::round(z).clamp(kHyperMin, kHyperMax).detach() + (z - z.detach());
  const auto z_rate = noisy ? z + (torch::rand_like(z) - 0.5) : out.z_hat;
  const auto hyper = hyper_decode(out.z_hat, h, w);

  // The causal context makes the sequential decoder's levels the fixed point
  // of ctx -> binary_reconstruct; iterate to it, then take one graded pass.
  torch::Tensor levels;
  {
    torch::NoGradGuard no_grad;
    auto p = context_(out.y, hyper);
    levels = binary_reconstruct(out.y, p.mu, p.sigma);
    for (int i = 0; i < kMaxContextPasses; ++i) {
      p = context_(levels, hyper);
      auto next = binary_reconstruct(out.y, p.mu, p.sigma);
      const bool settled = torch::equal(next, levels);
      levels = next;
      if (settled) break;
    }
  }
  out.params = context_(levels, hyper);
  out.y_hat = binary_reconstruct(out.y, out.params.mu, out.params.sigma);

  const auto y_rate = noisy ? out.y + (torch::rand_like(out.y) - 0.5) : out.y;
  out.rate_latent_bits = estimate_rate({y_rate}, out.params, RateMode::kTrain);
  out.rate_hyper_bits = -torch::log2(prior_->likelihood(z_rate)).sum();
  out.binary_bits = estimate_rate({out.y.detach()}, out.params, RateMode::kBits);
  out.x_hat = synthesize(out.y_hat, height, width);
  return out;
}

void CompressorImpl::code_hyper(const torch::Tensor& z_int, PayloadWriter* out,
                                PayloadReader* in, torch::Tensor* decoded, double* bits) {
  const auto masses = prior_->integer_masses().to(torch::kDouble).contiguous();
  const int alphabet = kHyperMax - kHyperMin + 1;
  const int channels = config_.hyper_channels;
  std::vector<double> prefix(static_cast<std::size_t>(channels) * (alphabet + 1), 0.0);
  const double* m = masses.data_ptr<double>();
  for (int c = 0; c < channels; ++c) {
    for (int v = 0; v < alphabet; ++v) {
      prefix[c * (alphabet + 1) + v + 1] = prefix[c * (alphabet + 1) + v] + m[c * alphabet + v];
    }
  }
  auto values = z_int.to(torch::kFloat).contiguous();
  float* data = values.data_ptr<float>();
  const auto per_channel = values.numel() / channels;
  for (int c = 0; c < channels; ++c) {
    const double* cum = &prefix[c * (alphabet + 1)];
    for (std::int64_t s = 0; s < per_channel; ++s) {
      float& value = data[c * per_channel + s];
      const int target = out ? static_cast<int>(value) - kHyperMin : 0;
      int lo = 0;
      int hi = alphabet;
      while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        const double p_plus = (cum[hi] - cum[mid]) / (cum[hi] - cum[lo]);
        std::int8_t symbol;
        if (out) {
          symbol = target >= mid ? 1 : -1;
          out->put(symbol, p_plus);
        } else {
          symbol = in->get(p_plus);
        }
        *bits += symbol_information(symbol, p_plus);
        (symbol > 0 ? lo : hi) = mid;
      }
      value = static_cast<float>(lo + kHyperMin);
    }
  }
  *decoded = values;
}

LatentCoding CompressorImpl::encode(const torch::Tensor& x, PayloadWriter& hyper_out,
                                    PayloadWriter& latent_out) {
  torch::NoGradGuard guard;
  ++coding_calls_;
  if (x.size(0) != 1 || x.size(2) % kLatentStride != 0 || x.size(3) % kLatentStride != 0) {
    fail(ErrorKind::kConfiguration, "coding needs one plane padded to multiples of 16");
  }
  const auto y = attention_reduce(analyze(x)).first.contiguous();
  const int h = static_cast<int>(y.size(2));
  const int w = static_cast<int>(y.size(3));
  LatentCoding result;
  const auto z = hyper_encode(y).round().clamp(kHyperMin, kHyperMax);
  code_hyper(z, &hyper_out, nullptr, &result.z_hat, &result.estimated_bits);
  const auto hyper = hyper_decode(result.z_hat, h, w);

  SequentialContext ctx(*context_, hyper);
  const float* y_data = y.data_ptr<float>();
  std::vector<float> y_hat(ctx.sample_count());
  for (std::size_t k = 0; k < y_hat.size(); ++k) {
    const auto p = ctx.at(std::span<const float>(y_hat.data(), k), k);
    const auto b = quantize(y_data[k], p.mu, p.sigma);
    y_hat[k] = dequantize(b, p.mu, p.sigma);
    latent_out.put(b, p.p_plus);
    result.estimated_bits += symbol_information(b, p.p_plus);
  }
  result.symbols = y_hat.size();
  result.y_hat = torch::from_blob(y_hat.data(), {1, config_.latent_channels, h, w}).clone();
  return result;
}

LatentCoding CompressorImpl::decode(PayloadReader& hyper_in, PayloadReader& latent_in,
                                    int height, int width) {
  torch::NoGradGuard guard;
  ++coding_calls_;
  const int h = height / kLatentStride;
  const int w = width / kLatentStride;
  if (h < kHyperStride || w < kHyperStride || height % kLatentStride || width % kLatentStride) {
    fail(ErrorKind::kConfiguration, "decoded plane size is not codable");
  }
  const int hz = (h + kHyperStride - 1) / kHyperStride;
  const int wz = (w + kHyperStride - 1) / kHyperStride;
  LatentCoding result;
  code_hyper(torch::zeros({1, config_.hyper_channels, hz, wz}), nullptr, &hyper_in,
             &result.z_hat, &result.estimated_bits);
  const auto hyper = hyper_decode(result.z_hat, h, w);

  SequentialContext ctx(*context_, hyper);
  std::vector<float> y_hat(ctx.sample_count());
  for (std::size_t k = 0; k < y_hat.size(); ++k) {
    const auto p = ctx.at(std::span<const float>(y_hat.data(), k), k);
    const auto b = latent_in.get(p.p_plus);
    y_hat[k] = dequantize(b, p.mu, p.sigma);
    result.estimated_bits += symbol_information(b, p.p_plus);
  }
  result.symbols = y_hat.size();
  result.y_hat = torch::from_blob(y_hat.data(), {1, config_.latent_channels, h, w}).clone();
  return result;
}

}  // namespace devc
