// Runs every acceptance criterion and prints one PASS/FAIL line for each.
// Exit status is non-zero when any criterion fails.

#include <torch/torch.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "devc/codec.hpp"
#include "devc/compressor.hpp"
#include "devc/entropy.hpp"
#include "devc/evaluation.hpp"
#include "devc/metrics.hpp"
#include "devc/motion.hpp"
#include "devc/synthetic.hpp"
#include "devc/training.hpp"

using namespace devc;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

// ---- numerical gradient helper (double precision) ----

double gradient_error(const std::function<torch::Tensor(const torch::Tensor&)>& f,
                      torch::Tensor x, int probes, std::uint64_t seed) {
  constexpr double kStep = 1e-4;
  x = x.detach().to(torch::kFloat64).clone().requires_grad_(true);
  const auto analytic = torch::autograd::grad({f(x)}, {x})[0].detach().flatten();
  auto flat = x.detach().flatten().clone();
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  const auto n = flat.numel();
  torch::NoGradGuard guard;
  for (int i = 0; i < probes; ++i) {
    const auto k = probes >= n ? i % n : static_cast<std::int64_t>(rng() % n);
    const double v = flat[k].item<double>();
    flat[k] = v + kStep;
    const double hi = f(flat.view(x.sizes())).item<double>();
    flat[k] = v - kStep;
    const double lo = f(flat.view(x.sizes())).item<double>();
    flat[k] = v;
    const double numeric = (hi - lo) / (2 * kStep);
    const double a = analytic[k].item<double>();
    worst = std::max(worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6}));
  }
  return worst;
}

double information_bits(const BinaryCodes& s, const std::vector<double>& p) {
  double bits = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) bits += symbol_information(s[i], p[i]);
  return bits;
}

// ---- 1 ----
Outcome entropy_losslessness() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int failures = 0;
  constexpr int kTrials = 1000;
  constexpr std::size_t kLength = 10000;
  for (int trial = 0; trial < kTrials; ++trial) {
    // Probability of the next symbol depends on the two previous symbols and
    // a per-trial table, so the decoder must feed back what it decoded.
    std::uniform_real_distribution<double> u(0.01, 0.99);
    const double table[4] = {u(rng), u(rng), u(rng), u(rng)};
    auto source = [&](std::size_t i, std::span<const std::int8_t> prev) {
      const int a = i >= 1 && prev[i - 1] > 0;
      const int b = i >= 2 && prev[i - 2] > 0;
      return table[2 * a + b];
    };
    BinaryCodes symbols;
    std::vector<double> probs;
    symbols.reserve(kLength);
    for (std::size_t i = 0; i < kLength; ++i) {
      const double p = source(i, symbols);
      probs.push_back(p);
      symbols.push_back(std::bernoulli_distribution(p)(rng) ? 1 : -1);
    }
    const auto payload = Payload::parse(range_encode(symbols, probs).serialize());
    if (range_decode(payload, source, kLength) != symbols) ++failures;
  }
  const double elapsed = seconds_since(t0);
  o.detail << kTrials << " round trips of " << kLength << " symbols, " << failures
           << " mismatches, " << elapsed << " s";
  o.require(failures == 0, "round trip mismatch");
  o.require(elapsed < 60.0, "runtime >= 60 s");
  return o;
}

// ---- 2 ----
Outcome entropy_efficiency() {
  Outcome o;
  std::mt19937_64 rng(202);
  for (double p : {0.5, 0.9, 0.99}) {
    double worst_gap = -1e9;
    double bits_per_symbol = 0.0;
    constexpr int kSuites = 20;
    constexpr std::size_t kLength = 100000;
    for (int s = 0; s < kSuites; ++s) {
      BinaryCodes symbols(kLength);
      std::bernoulli_distribution d(p);
      for (auto& x : symbols) x = d(rng) ? 1 : -1;
      const std::vector<double> probs(kLength, p);
      const double info = information_bits(symbols, probs);
      const double coded = 8.0 * double(range_encode(symbols, probs).bytes.size());
      const double allowed = 0.02 * info + 128.0;
      worst_gap = std::max(worst_gap, (coded - info) / allowed);
      bits_per_symbol += coded / kLength / kSuites;
    }
    o.detail << "p=" << p << ": " << bits_per_symbol << " bits/symbol, worst gap "
             << worst_gap << " of allowance; ";
    o.require(worst_gap <= 1.0, "coded length exceeds information + 2% + 128 bits");
    if (p == 0.99) {
      const double h = -(0.99 * std::log2(0.99) + 0.01 * std::log2(0.01));
      o.require(std::abs(bits_per_symbol - h) <= 0.02 * h,
                "p=0.99 rate not within 2% of 0.0808 bits/symbol");
    }
  }
  return o;
}

// ---- 3 ----
Outcome reconstruction_exactness() {
  Outcome o;
  std::mt19937_64 rng(303);
  std::normal_distribution<double> n(0.0, 3.0);
  std::uniform_real_distribution<double> pos(1e-3, 5.0);
  long mismatches = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double mu = n(rng), sigma = pos(rng);
    const std::int8_t b = (rng() & 1) ? 1 : -1;
    if (dequantize(b, mu, sigma) != mu + sigma * static_cast<double>(b)) ++mismatches;
    const float muf = static_cast<float>(mu), sf = static_cast<float>(sigma);
    if (dequantize(b, muf, sf) != muf + sf * static_cast<float>(b)) ++mismatches;
    if (dequantize<double>(-b, mu, sigma) + dequantize<double>(b, mu, sigma) != 2 * mu &&
        std::abs(dequantize<double>(-b, mu, sigma) + dequantize<double>(b, mu, sigma) - 2 * mu) >
            1e-12 * std::abs(mu) + 1e-15) {
      ++mismatches;
    }
  }
  o.require(mismatches == 0, "dequantize differs from mu + sigma * b");

  torch::manual_seed(3);
  Compressor c(ModelConfig::smoke().residual_compressor);
  c->eval();
  int differing = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto x = (torch::rand({1, 1, 64 + 16 * trial, 128}) * 2 - 1) * (0.2 * (trial + 1));
    PayloadWriter hw, lw;
    const auto enc = c->encode(x, hw, lw);
    const auto hp = hw.finish(), lp = lw.finish();
    PayloadReader hr(hp), lr(lp);
    const auto dec = c->decode(hr, lr, static_cast<int>(x.size(2)), 128);
    if (!torch::equal(enc.y_hat, dec.y_hat) ||
        !torch::equal(c->synthesize(enc.y_hat, int(x.size(2)), 128),
                      c->synthesize(dec.y_hat, int(x.size(2)), 128))) {
      ++differing;
    }
  }
  o.detail << "2x10^6 fuzzed dequantizations, " << mismatches << " mismatches; " << differing
           << "/5 latent reconstructions differ between encoder and decoder";
  o.require(differing == 0, "encoder and decoder latents differ");
  return o;
}

// ---- 4 ----
Outcome decoder_subset(CodecModels& models) {
  Outcome o;
  std::mt19937_64 rng(404);
  int mismatches = 0, runs = 0;
  for (int i = 0; i < 50; ++i) {
    const int w = 2 * static_cast<int>(16 + rng() % 48);
    const int h = 2 * static_cast<int>(16 + rng() % 48);
    FramePair pair;
    switch (i % 4) {
      case 0: pair = translation_pair(w, h, int(rng() % 13) - 6, int(rng() % 13) - 6, rng()); break;
      case 1: pair = scene_cut_pair(w, h, rng()); break;
      case 2: pair = static_pair(w, h, rng()); break;
      default: {
        pair.reference = YuvFrame::blank(w, h);
        pair.target = YuvFrame::blank(w, h);
        for (int p = 0; p < 3; ++p) {
          for (auto& v : pair.reference.plane(p).data) v = static_cast<std::uint8_t>(rng());
          for (auto& v : pair.target.plane(p).data) v = static_cast<std::uint8_t>(rng());
        }
      }
    }
    for (auto mode : {CodingMode::kMotionCompensated, CodingMode::kBypass}) {
      EncodeOptions opts;
      opts.force_mode = mode;
      const auto enc = encode_pframe(pair, models, opts);
      ++runs;
      if (decode_pframe(pair.reference, enc.bytes, models) != enc.reconstruction) ++mismatches;
    }
  }
  o.detail << runs << " encodes (50 pairs x 2 modes), " << mismatches << " decoder mismatches";
  o.require(mismatches == 0, "decoded frame differs from encoder reconstruction");
  return o;
}

// ---- 5 ----
Outcome warping() {
  Outcome o;
  torch::manual_seed(5);
  const auto x = torch::rand({1, 3, 40, 56});
  o.require(torch::equal(warp(x, torch::zeros({1, 2, 40, 56})), x), "zero flow not identity");
  long bad = 0, checked = 0;
  const auto acc = x.accessor<float, 4>();
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      auto flow = torch::zeros({1, 2, 40, 56});
      flow.select(1, 0).fill_(dx);
      flow.select(1, 1).fill_(dy);
      const auto w = warp(x, flow);
      const auto wa = w.accessor<float, 4>();
      for (int c = 0; c < 3; ++c) {
        for (int y = 1; y < 39; ++y) {
          for (int xx = 1; xx < 55; ++xx) {
            const int sy = y + dy, sx = xx + dx;
            if (sy < 0 || sy >= 40 || sx < 0 || sx >= 56) continue;
            ++checked;
            if (wa[0][c][y][xx] != acc[0][c][sy][sx]) ++bad;
          }
        }
      }
    }
  }
  o.detail << "zero flow identity exact; " << checked << " interior samples over 49 integer shifts, "
           << bad << " differ from the direct shift";
  o.require(bad == 0, "integer shift differs from oracle");
  return o;
}

// ---- 6 ----
Outcome causality() {
  Outcome o;
  torch::NoGradGuard guard;
  torch::manual_seed(6);
  const auto config = ModelConfig::smoke().residual_compressor;
  ContextModel ctx(config);
  const auto hyper = torch::randn({1, config.latent_channels * config.context_features, 6, 7});
  const auto y = torch::randn({1, config.latent_channels, 6, 7});
  const auto base = ctx->forward(y, hyper);
  const auto n = y.numel();
  std::mt19937_64 rng(66);
  int changed = 0;
  for (int t = 0; t < 100; ++t) {
    const auto k = static_cast<std::int64_t>(rng() % n);
    auto p = y.clone().flatten();
    p.narrow(0, k, n - k).add_(torch::randn({n - k}) * 3);
    const auto out = ctx->forward(p.view(y.sizes()), hyper);
    for (auto field : {&ContextParams::mu, &ContextParams::sigma, &ContextParams::p_plus}) {
      const float a = (out.*field).flatten()[k].item<float>();
      const float b = (base.*field).flatten()[k].item<float>();
      if (a != b) ++changed;
    }
  }
  o.detail << "100 perturbations of samples >= k, " << changed << " parameter changes at k";
  o.require(changed == 0, "context parameters depend on future samples");
  return o;
}

// ---- 7 ----
Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  torch::manual_seed(7);
  const auto rate = torch::tensor(20.0, torch::kFloat64);
  const auto x = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  const double rd_mse = gradient_error(
      [&](const torch::Tensor& v) { return rd_loss(x, v, rate, 1024, DistortionKind::kMse); },
      torch::rand({1, 1, 8, 8}, torch::kFloat64), 64, 1);
  // MS-SSIM is undefined below 16 pixels per side.
  const auto big = torch::rand({1, 1, 16, 16}, torch::kFloat64);
  const double rd_ssim = gradient_error(
      [&](const torch::Tensor& v) { return rd_loss(big, v, rate, 128, DistortionKind::kMsSsim); },
      (big + 0.1 * torch::randn_like(big)).clamp(0.05, 0.95), 64, 2);

  const auto ref = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  const auto tgt = torch::rand({1, 1, 8, 8}, torch::kFloat64);
  const auto ref2 = torch::rand({1, 1, 4, 4}, torch::kFloat64);
  const auto tgt2 = torch::rand({1, 1, 4, 4}, torch::kFloat64);
  const double me = gradient_error(
      [&](const torch::Tensor& v) {
        FlowPyramid p;
        p.levels = {v.narrow(0, 0, 32).view({1, 2, 4, 4}), v.narrow(0, 32, 128).view({1, 2, 8, 8})};
        return me_loss(p, {ref2, ref}, {tgt2, tgt});
      },
      (torch::rand({160}, torch::kFloat64) - 0.5) * 4, 160, 3);

  const int k = 3;
  const std::int64_t n = 2 * 4 * 4;
  const double rate_train = gradient_error(
      [&](const torch::Tensor& v) {
        ContextParams p;
        const auto yy = v.narrow(0, 0, n).view({1, 2, 4, 4});
        p.means = v.narrow(0, n, n * k).view({1, 2, k, 4, 4});
        p.scales = torch::softplus(v.narrow(0, n + n * k, n * k)).view({1, 2, k, 4, 4}) + 0.1;
        p.weights = torch::softmax(v.narrow(0, n + 2 * n * k, n * k).view({1, 2, k, 4, 4}), 2);
        return estimate_rate({yy}, p, RateMode::kTrain);
      },
      torch::randn({n * (1 + 3 * k)}, torch::kFloat64), 50, 4);
  const double elapsed = seconds_since(t0);
  o.detail << "max relative error: rd_loss mse " << rd_mse << ", rd_loss ms-ssim " << rd_ssim
           << ", me_loss " << me << ", estimate_rate " << rate_train << "; " << elapsed << " s";
  for (double e : {rd_mse, rd_ssim, me, rate_train}) o.require(e < 1e-3, "relative error >= 1e-3");
  o.require(elapsed < 300.0, "runtime >= 5 min");
  return o;
}

// ---- 8 ----

struct SmokeModel {
  std::unique_ptr<CodecModels> models;
  CheckpointInfo info;
  bool ready = false;
};

TrainConfig smoke_config(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.model_preset = "smoke";
  c.batch_size = 4;
  c.crop = 128;
  c.learning_rate = 1e-3;
  c.lambda = 1024;
  c.mv_lambda = 1024;
  c.log_every = 10;
  return c;
}

double moving_average(const std::vector<StepRecord>& h, bool head, std::size_t window) {
  window = std::min(window, h.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < window; ++i) sum += h[head ? i : h.size() - 1 - i].loss;
  return sum / static_cast<double>(window);
}

Outcome smoke_training(SmokeModel& out) {
  Outcome o;
  const auto t0 = Clock::now();
  const auto data = translation_dataset(8, 128, 128, 6, 808);
  torch::manual_seed(8);
  auto models = std::make_unique<CodecModels>(ModelConfig::smoke());
  CheckpointInfo info;
  info.fingerprint = models->config.fingerprint();

  auto me = smoke_config(Stage::kMe);
  me.crop = 64;
  me.max_steps = 300;
  info = train_stage(*models, info, data, me).info;
  const auto me_weights = serialize_checkpoint(*models, info);

  auto s1 = smoke_config(Stage::kS1);
  s1.max_steps = 800;
  const auto r1 = train_stage(*models, info, data, s1);
  info = r1.info;
  const double first = moving_average(r1.history, true, 50);
  const double last = moving_average(r1.history, false, 50);
  const double drop = 1.0 - last / first;
  const auto after_s1 = measure(*models, data);

  auto s2 = smoke_config(Stage::kS2);
  s2.max_steps = 200;
  s2.learning_rate = 1e-4;
  info = train_stage(*models, info, data, s2).info;
  const auto after_s2 = measure(*models, data);
  const double s2_gain = 1.0 - after_s2.mse / after_s1.mse;

  auto s3 = smoke_config(Stage::kS3);
  s3.max_steps = 200;
  s3.learning_rate = 1e-4;
  s3.lambda = 128;
  info = train_stage(*models, info, data, s3).info;
  const auto after_s3 = measure(*models, data);

  o.detail << "S1 loss " << first << " -> " << last << " (" << 100 * drop << "% drop); "
           << "S2 MSE " << after_s1.mse << " -> " << after_s2.mse << " (" << 100 * s2_gain
           << "% better); S3 MS-SSIM " << after_s2.msssim << " -> " << after_s3.msssim << "; ";
  o.require(drop >= 0.5, "S1 RD loss fell less than 50%");
  o.require(s2_gain >= 0.05, "S2 improved MSE by less than 5%");
  o.require(after_s3.msssim >= after_s2.msssim, "S3 MS-SSIM below S2");

  // Lambda monotonicity: S1 from the same motion checkpoint at two lambdas.
  double d_hi = 0, r_hi = 0, d_lo = 0, r_lo = 0;
  for (std::uint64_t seed : {1, 2, 3}) {
    for (double lambda : {1024.0, 64.0}) {
      auto run = parse_checkpoint(me_weights);
      auto cfg = smoke_config(Stage::kS1);
      cfg.seed = seed;
      cfg.lambda = lambda;
      cfg.max_steps = 250;
      train_stage(*run.models, run.info, data, cfg);
      const auto m = measure(*run.models, data);
      (lambda > 100 ? d_hi : d_lo) += m.mse / 3;
      (lambda > 100 ? r_hi : r_lo) += m.rate_bpp / 3;
    }
  }
  o.detail << "lambda 1024: D " << d_hi << " R " << r_hi << " bpp, lambda 64: D " << d_lo << " R "
           << r_lo << " bpp; ";
  o.require(d_hi < d_lo, "higher lambda did not lower distortion");
  o.require(r_hi > r_lo, "higher lambda did not raise rate");

  const double elapsed = seconds_since(t0);
  o.detail << elapsed / 60 << " min";
  o.require(elapsed < 1800.0, "training took 30 min or more");
  out.models = std::move(models);
  out.info = info;
  out.ready = true;
  return o;
}

// ---- 9 ----
Outcome bypass_behavior(SmokeModel& smoke) {
  Outcome o;
  if (!smoke.ready) {
    o.require(false, "no trained model");
    return o;
  }
  auto& m = *smoke.models;
  int cuts_bypass = 0, shifts_mc = 0, total_bypass = 0;
  constexpr int kEach = 8;
  for (int i = 0; i < kEach; ++i) {
    if (encode_pframe(scene_cut_pair(128, 128, 900 + i), m).stats.mode == CodingMode::kBypass) {
      ++cuts_bypass;
    }
    const int dx = (i % 5) - 2 + (i % 2 ? 3 : 0);
    const int dy = 3 - (i % 7);
    if (encode_pframe(translation_pair(128, 128, dx, dy, 950 + i), m).stats.mode ==
        CodingMode::kMotionCompensated) {
      ++shifts_mc;
    }
  }
  total_bypass = cuts_bypass + (kEach - shifts_mc);
  const double fraction = total_bypass / double(2 * kEach);
  o.detail << cuts_bypass << "/" << kEach << " scene cuts chose bypass, " << shifts_mc << "/"
           << kEach << " translations chose motion compensation, mixed bypass fraction "
           << fraction;
  o.require(cuts_bypass == kEach, "a scene cut chose motion compensation");
  o.require(shifts_mc == kEach, "a translation chose bypass");
  o.require(fraction > 0.0 && fraction < 1.0, "bypass fraction not strictly inside (0,1)");
  return o;
}

// ---- 10 ----
Outcome rate_fidelity(SmokeModel& smoke) {
  Outcome o;
  if (!smoke.ready) {
    o.require(false, "no trained model");
    return o;
  }
  auto& m = *smoke.models;
  std::vector<FramePair> frames = translation_dataset(6, 128, 128, 6, 1010);
  frames.push_back(scene_cut_pair(128, 96, 1011));
  frames.push_back(static_pair(96, 128, 1012));
  double worst = 0.0;
  for (const auto& f : frames) {
    const auto enc = encode_pframe(f, m);
    const double est = enc.stats.estimated_bits;
    const double actual = static_cast<double>(enc.stats.coder_bits);
    worst = std::max(worst, std::abs(actual - est) / (0.1 * actual + 64.0));
  }
  o.detail << frames.size() << " frames, worst |actual - estimate| is " << worst
           << " of the 10% + 64 bit allowance";
  o.require(worst <= 1.0, "estimate outside tolerance");
  return o;
}

// ---- 11 ----
Outcome aggregation() {
  Outcome o;
  auto frame = [](std::size_t size, double ms, double ps, std::uint64_t bits) {
    FrameScore f;
    f.identifier = "f";
    f.size = size;
    f.msssim = ms;
    f.psnr_db = ps;
    f.bits = bits;
    f.bpp = double(bits) / double(size);
    f.mode = "mc";
    return f;
  };
  const std::vector<std::vector<FrameScore>> corpora{
      {frame(100, 0.9, 30.0, 800), frame(300, 1.0, 40.0, 1600)},
      {frame(1920 * 1080, 0.99675, 37.46, 8000), frame(640 * 480, 0.95, 31.0, 2400),
       frame(448 * 256, 0.9, 29.5, 16)},
      {frame(7, 0.1, 10.0, 8), frame(11, 0.2, 20.0, 8), frame(13, 0.3, 30.0, 8),
       frame(17, 0.4, 40.0, 8), frame(19, 0.5, 50.0, 8)}};
  double worst = 0.0;
  for (const auto& c : corpora) {
    // Hand computation with long double sums.
    long double ws = 0, wp = 0, total = 0;
    for (const auto& f : c) {
      ws += static_cast<long double>(f.msssim) * f.size;
      wp += static_cast<long double>(f.psnr_db) * f.size;
      total += f.size;
    }
    const auto report = summarize(c, kClicBudgetBytes);
    worst = std::max({worst, std::abs(report.weighted_msssim - double(ws / total)),
                      std::abs(report.weighted_psnr - double(wp / total)),
                      std::abs(aggregate_weighted(c, Metric::kMsSsim) - double(ws / total))});
  }
  o.detail << "3 corpora, worst deviation " << worst << "; ";
  o.require(worst <= 1e-12, "aggregate deviates from hand computation");

  const auto& c = corpora[0];  // 2400 bits = 300 bytes
  const bool at = summarize(c, 300).budget_ok;
  const bool below = summarize(c, 299).budget_ok;
  o.detail << "300-byte corpus: budget 300 ok=" << at << ", budget 299 ok=" << below;
  o.require(at && !below, "budget flag does not flip at the boundary byte");
  return o;
}

// ---- 12 ----
Outcome model_size() {
  Outcome o;
  CodecModels ours(ModelConfig::standard());
  CodecModels wide(ModelConfig::baseline128());
  auto count = [](const torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
  };
  const auto a = count(*ours.residual_compressor) + count(*ours.frame_refine);
  const auto b = count(*wide.residual_compressor) + count(*wide.frame_refine);
  o.detail << "64-channel + attention compressor and refine-net: " << a
           << " parameters; 128-channel baseline: " << b << " (difference " << b - a
           << "); full codecs " << ours.parameter_count() << " vs " << wide.parameter_count();
  o.require(a < b, "compressor is not smaller than the baseline");
  o.require(ours.parameter_count() < wide.parameter_count(), "codec is not smaller");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  // Optional arguments restrict the run to the listed criterion numbers.
  std::vector<bool> selected(13, argc == 1);
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n >= 1 && n <= 12) selected[n] = true;
  }
  torch::manual_seed(0);
  SmokeModel smoke;
  CodecModels untrained(ModelConfig::smoke());

  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"entropy losslessness", entropy_losslessness},
      {"entropy efficiency", entropy_efficiency},
      {"binary reconstruction exactness", reconstruction_exactness},
      {"decoder subset", [&] { return decoder_subset(untrained); }},
      {"warping", warping},
      {"context causality", causality},
      {"gradient checks", gradient_checks},
      {"smoke training", [&] { return smoke_training(smoke); }},
      {"bypass behaviour", [&] { return bypass_behavior(smoke); }},
      {"rate estimate fidelity", [&] { return rate_fidelity(smoke); }},
      {"size-weighted aggregation", aggregation},
      {"model size ordering", model_size},
  };

  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i + 1]) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "exception: " << e.what();
    }
    failed += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].name,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
