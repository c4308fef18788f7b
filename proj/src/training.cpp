#include "devc/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "devc/error.hpp"
#include "devc/metrics.hpp"
#include "devc/motion.hpp"
#include "devc/refine.hpp"
#include "devc/synthetic.hpp"

namespace devc {

namespace {

constexpr double kPlaneWeights[3] = {4.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
constexpr double kMsSsimFloor = 1e-4;

std::int64_t luma_pixels(const torch::Tensor& y) { return y.size(0) * y.size(2) * y.size(3); }

void set_trainable(torch::nn::Module& module, bool on) {
  for (auto& p : module.parameters()) p.set_requires_grad(on);
}

std::vector<torch::Tensor> trainable(CodecModels& models, Stage stage) {
  std::vector<std::string> names;
  switch (stage) {
    case Stage::kMe: names = {"flow_net"}; break;
    case Stage::kS1: names = {"mv_compressor", "residual_compressor"}; break;
    case Stage::kS2: names = {"mv_refine", "frame_refine"}; break;
    case Stage::kS3:
      names = {"mv_refine", "mv_compressor", "residual_compressor", "frame_refine"};
      break;
  }
  std::vector<torch::Tensor> params;
  for (auto& [name, module] : models.groups()) {
    const bool on = std::find(names.begin(), names.end(), name) != names.end();
    set_trainable(*module, on);
    module->train(on);
    if (on) {
      for (auto& p : module->parameters()) params.push_back(p);
    }
  }
  return params;
}

/// Moving-average plateau detector.
class Plateau {
 public:
  Plateau(int window, double threshold) : window_(window), threshold_(threshold) {}

  bool update(double loss) {
    values_.push_back(loss);
    if (values_.size() < static_cast<std::size_t>(2 * window_)) return false;
    const auto end = values_.end();
    const double recent = std::accumulate(end - window_, end, 0.0) / window_;
    const double before = std::accumulate(end - 2 * window_, end - window_, 0.0) / window_;
    if ((before - recent) / std::abs(before) < threshold_) {
      values_.clear();
      return true;
    }
    return false;
  }

 private:
  int window_;
  double threshold_;
  std::vector<double> values_;
};

struct StepLoss {
  torch::Tensor loss;
  double distortion = 0.0;
  double rate_bpp = 0.0;
};

torch::Tensor flow_to_unit(const torch::Tensor& flow, double m) {
  return ((flow + m) / (2.0 * m)).clamp(0.0, 1.0);
}

StepLoss me_step(CodecModels& models, const BatchTensors& b) {
  const int levels = models.motion->levels();
  const auto pyramid = models.motion->forward(b.ref[0], b.target[0]);
  const auto loss = me_loss(pyramid, image_pyramid(b.ref[0], levels),
                            image_pyramid(b.target[0], levels));
  return {loss, loss.item<double>(), 0.0};
}

StepLoss compressor_step(CodecModels& models, const BatchTensors& b, Stage stage,
                         double lambda, const TrainConfig& config) {
  const double m = models.config.motion.max_displacement;
  const double pixels = static_cast<double>(luma_pixels(b.ref[0]));
  const bool noisy = stage != Stage::kS2;

  torch::Tensor flow;
  {
    torch::NoGradGuard guard;
    flow = models.motion->forward(b.ref[0], b.target[0]).finest();
  }
  const auto flow_unit = flow_to_unit(flow, m);
  const auto mv = models.mv_compressor->forward(flow_unit, noisy);
  auto decoded_flow = mv.x_hat * (2.0 * m) - m;
  if (stage == Stage::kS1) decoded_flow = decoded_flow.detach();
  if (stage != Stage::kS1 && models.use_mv_refine) {
    decoded_flow = refine_decoded_motion(models.mv_refine, decoded_flow);
  }
  const auto chroma = chroma_flow(decoded_flow);

  auto rate = mv.rate_bits();
  auto aux = mv.binary_bits;
  torch::Tensor distortion = torch::zeros({}, flow.options());
  for (int p = 0; p < 3; ++p) {
    auto pred = warp(b.ref[p], p == 0 ? decoded_flow : chroma);
    if (stage == Stage::kS1) pred = pred.detach();
    const auto residual = b.target[p] - pred;
    const auto res = models.residual_compressor->forward(residual, noisy);
    rate = rate + res.rate_bits();
    aux = aux + res.binary_bits;
    torch::Tensor recon;
    if (stage == Stage::kS1 || !models.use_frame_refine) {
      recon = pred + res.x_hat;
    } else {
      recon = refine_frame(models.frame_refine, pred, res.x_hat);
    }
    torch::Tensor d;
    if (stage == Stage::kS3) {
      d = 1.0 - ms_ssim(b.target[p], recon, 1.0, kMsSsimFloor).mean();
    } else {
      d = torch::mse_loss(recon, b.target[p]);
    }
    distortion = distortion + kPlaneWeights[p] * d;
  }

  const auto rate_bpp = rate / pixels;
  StepLoss out;
  out.distortion = distortion.item<double>();
  out.rate_bpp = rate_bpp.item<double>();
  if (stage == Stage::kS2) {
    out.loss = distortion;
    if (models.use_mv_refine && config.flow_weight > 0.0) {
      out.loss = out.loss + config.flow_weight * torch::mse_loss(flow_to_unit(decoded_flow, m),
                                                                 flow_unit);
    }
    return out;
  }
  const auto mv_distortion = torch::mse_loss(mv.x_hat, flow_unit);
  out.loss = lambda * distortion + rate_bpp + config.mv_lambda * mv_distortion + aux / pixels;
  return out;
}


}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kMe: return "me";
    case Stage::kS1: return "s1";
    case Stage::kS2: return "s2";
    case Stage::kS3: return "s3";
  }
  return "?";
}

Stage parse_stage(const std::string& name) {
  if (name == "me") return Stage::kMe;
  if (name == "s1") return Stage::kS1;
  if (name == "s2") return Stage::kS2;
  if (name == "s3") return Stage::kS3;
  fail(ErrorKind::kConfiguration, "unknown training stage '" + name + "'");
}

DistortionKind parse_distortion(const std::string& name) {
  if (name == "mse") return DistortionKind::kMse;
  if (name == "msssim") return DistortionKind::kMsSsim;
  fail(ErrorKind::kConfiguration, "unknown distortion kind '" + name + "'");
}

torch::Tensor rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                      const torch::Tensor& rate_bits, double lambda, DistortionKind kind) {
  if (x.sizes() != x_hat.sizes()) fail(ErrorKind::kInvalidGeometry, "rd_loss shape mismatch");
  if (x.dim() != 4) fail(ErrorKind::kInvalidGeometry, "rd_loss expects [B,C,H,W]");
  const auto pixels = static_cast<double>(x.size(0) * x.size(2) * x.size(3));
  torch::Tensor d;
  if (kind == DistortionKind::kMse) {
    d = (x - x_hat).square().mean();
  } else {
    d = 1.0 - ms_ssim(x, x_hat, 1.0, kMsSsimFloor).mean();
  }
  return lambda * d + rate_bits / pixels;
}

torch::Tensor rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                      const torch::Tensor& rate_bits, double lambda, const std::string& kind) {
  return rd_loss(x, x_hat, rate_bits, lambda, parse_distortion(kind));
}

LambdaSchedule::LambdaSchedule(std::vector<std::pair<std::int64_t, double>> points)
    : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!(points_[i].second > 0.0)) fail(ErrorKind::kConfiguration, "lambda must be positive");
    if (i > 0 && points_[i].first <= points_[i - 1].first) {
      fail(ErrorKind::kConfiguration, "lambda schedule steps must increase strictly");
    }
  }
}

double LambdaSchedule::at(std::int64_t step) const {
  if (points_.empty()) fail(ErrorKind::kConfiguration, "empty lambda schedule");
  double value = points_.front().second;
  for (const auto& [s, l] : points_) {
    if (s <= step) value = l;
  }
  return value;
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0) || !(mv_lambda > 0.0)) {
    fail(ErrorKind::kConfiguration, "lambda must be positive");
  }
  if (batch_size < 1) fail(ErrorKind::kConfiguration, "batch_size must be positive");
  if (crop < 64 || crop % 16 != 0) {
    fail(ErrorKind::kConfiguration, "crop must be a multiple of 16 and at least 64");
  }
  // Chroma crops are half size and the hyperprior needs a 4x4 latent grid.
  if (stage != Stage::kMe && crop < 128) {
    fail(ErrorKind::kConfiguration, "compressor stages need a crop of at least 128");
  }
  if (max_steps < 0) fail(ErrorKind::kConfiguration, "max_steps must be non-negative");
  if (!(learning_rate > 0.0)) fail(ErrorKind::kConfiguration, "learning_rate must be positive");
  if (plateau_window < 1) fail(ErrorKind::kConfiguration, "plateau_window must be positive");
  if (log_every < 1) fail(ErrorKind::kConfiguration, "log_every must be positive");
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.stage = parse_stage(kv.get("stage", to_string(c.stage)));
  c.lambda = kv.get("lambda", c.lambda);
  c.mv_lambda = kv.get("mv_lambda", c.mv_lambda);
  if (kv.has("schedule")) {
    std::vector<std::pair<std::int64_t, double>> points;
    std::stringstream ss(kv.get("schedule", std::string{}));
    for (std::string item; std::getline(ss, item, ',');) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) {
        fail(ErrorKind::kConfiguration, "schedule entries must be step:lambda");
      }
      try {
        points.emplace_back(std::stoll(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
      } catch (const std::exception&) {
        fail(ErrorKind::kConfiguration, "bad schedule entry '" + item + "'");
      }
    }
    c.schedule = LambdaSchedule(std::move(points));
  }
  c.batch_size = kv.get("batch_size", c.batch_size);
  c.crop = kv.get("crop", c.crop);
  c.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<int>(c.seed)));
  c.max_steps = kv.get("max_steps", static_cast<int>(c.max_steps));
  c.learning_rate = kv.get("learning_rate", c.learning_rate);
  c.plateau_window = kv.get("plateau_window", c.plateau_window);
  c.plateau_threshold = kv.get("plateau_threshold", c.plateau_threshold);
  c.halve_on_plateau = kv.get("halve_on_plateau", c.halve_on_plateau);
  c.flow_weight = kv.get("flow_weight", c.flow_weight);
  c.model_preset = kv.get("model", c.model_preset);
  c.checkpoint_in = kv.get("checkpoint_in", std::string{});
  c.checkpoint_out = kv.get("checkpoint_out", std::string{});
  c.metrics_csv = kv.get("metrics", std::string{});
  c.manifest = kv.get("manifest", std::string{});
  c.synthetic_pairs = kv.get("synthetic_pairs", c.synthetic_pairs);
  c.synthetic_size = kv.get("synthetic_size", c.synthetic_size);
  c.synthetic_max_shift = kv.get("synthetic_max_shift", c.synthetic_max_shift);
  c.log_every = kv.get("log_every", c.log_every);
  c.validate();
  return c;
}

namespace {

Plane<std::uint8_t> crop_plane(const Plane<std::uint8_t>& src, int x0, int y0, int w, int h,
                               bool flip) {
  Plane<std::uint8_t> out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.at(flip ? w - 1 - x : x, y) = src.at(x0 + x, y0 + y);
  }
  return out;
}

YuvFrame crop_frame(const YuvFrame& f, int x0, int y0, int size, bool flip) {
  YuvFrame out;
  out.y = crop_plane(f.y, x0, y0, size, size, flip);
  out.u = crop_plane(f.u, x0 / 2, y0 / 2, size / 2, size / 2, flip);
  out.v = crop_plane(f.v, x0 / 2, y0 / 2, size / 2, size / 2, flip);
  return out;
}

}  // namespace

std::vector<FramePair> make_training_batch(const std::vector<FramePair>& dataset, int crop,
                                           int batch_size, std::mt19937_64& rng) {
  std::vector<const FramePair*> usable;
  for (const auto& pair : dataset) {
    if (pair.reference.width() < crop || pair.reference.height() < crop) {
      std::cerr << "warning: skipping " << pair.identifier << " (smaller than crop " << crop
                << ")\n";
      continue;
    }
    usable.push_back(&pair);
  }
  if (usable.empty()) fail(ErrorKind::kIngestion, "no training pair is large enough for the crop");
  std::vector<FramePair> batch;
  for (int i = 0; i < batch_size; ++i) {
    const auto& pair = *usable[std::uniform_int_distribution<std::size_t>(0, usable.size() - 1)(rng)];
    const int x0 = 2 * std::uniform_int_distribution<int>(0, (pair.reference.width() - crop) / 2)(rng);
    const int y0 = 2 * std::uniform_int_distribution<int>(0, (pair.reference.height() - crop) / 2)(rng);
    const bool flip = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    batch.push_back({crop_frame(pair.reference, x0, y0, crop, flip),
                     crop_frame(pair.target, x0, y0, crop, flip), pair.identifier});
  }
  return batch;
}

std::vector<FramePair> make_training_batch(const std::vector<FramePair>& dataset, int crop,
                                           int batch_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return make_training_batch(dataset, crop, batch_size, rng);
}

BatchTensors batch_tensors(const std::vector<FramePair>& batch) {
  BatchTensors out;
  for (int p = 0; p < 3; ++p) {
    std::vector<torch::Tensor> refs, targets;
    for (const auto& pair : batch) {
      refs.push_back(to_tensor(pair.reference.plane(p)));
      targets.push_back(to_tensor(pair.target.plane(p)));
    }
    out.ref[p] = torch::cat(refs, 0);
    out.target[p] = torch::cat(targets, 0);
  }
  return out;
}

StageMetrics measure(CodecModels& models, const std::vector<FramePair>& pairs) {
  StageMetrics m;
  if (pairs.empty()) return m;
  EncodeOptions options;
  options.force_mode = CodingMode::kMotionCompensated;
  for (const auto& pair : pairs) {
    const auto result = encode_pframe(pair, models, options);
    double mse = 0.0;
    for (int p = 0; p < 3; ++p) {
      const auto& a = pair.target.plane(p);
      const auto& r = result.reconstruction.plane(p);
      double sum = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = (a.data[i] - r.data[i]) / 255.0;
        sum += d * d;
      }
      mse += kPlaneWeights[p] * sum / static_cast<double>(a.size());
    }
    m.mse += mse;
    m.msssim += result.stats.msssim;
    m.rate_bpp += result.stats.bpp;
  }
  const auto n = static_cast<double>(pairs.size());
  m.mse /= n;
  m.msssim /= n;
  m.rate_bpp /= n;
  return m;
}

TrainResult train_stage(CodecModels& models, const CheckpointInfo& info_in,
                        const std::vector<FramePair>& dataset, const TrainConfig& config) {
  config.validate();
  const Stage stage = config.stage;
  const char* required = nullptr;
  switch (stage) {
    case Stage::kMe: break;
    case Stage::kS1: required = "me"; break;
    case Stage::kS2: required = "s1"; break;
    case Stage::kS3: required = "s2"; break;
  }
  if (required && !info_in.has_stage(required)) {
    fail(ErrorKind::kConfiguration, "stage " + to_string(stage) + " requires a checkpoint with stage " +
                                        required + " completed");
  }
  if (info_in.fingerprint != 0 && info_in.fingerprint != models.config.fingerprint()) {
    fail(ErrorKind::kConfiguration, "checkpoint fingerprint does not match the model config");
  }

  torch::manual_seed(config.seed);
  std::mt19937_64 rng(config.seed);
  auto params = trainable(models, stage);
  torch::optim::Adam optimizer(params, torch::optim::AdamOptions(config.learning_rate));
  double learning_rate = config.learning_rate;

  std::ofstream csv;
  if (!config.metrics_csv.empty()) {
    const bool fresh = !std::filesystem::exists(config.metrics_csv) ||
                       std::filesystem::file_size(config.metrics_csv) == 0;
    csv.open(config.metrics_csv, std::ios::app);
    if (!csv) fail(ErrorKind::kUsage, "cannot open metrics file " + config.metrics_csv.string());
    if (fresh) csv << "step,loss,D,R,lambda\n";
  }

  TrainResult result;
  result.info = info_in;
  result.info.fingerprint = models.config.fingerprint();
  Plateau plateau(config.plateau_window, config.plateau_threshold);
  bool switched = false;
  const std::int64_t start = info_in.step;

  for (std::int64_t i = 0; i < config.max_steps; ++i) {
    const std::int64_t step = start + i;
    double lambda = config.lambda;
    if (!config.schedule.points().empty()) {
      lambda = config.schedule.at(i);
    } else if (stage == Stage::kS3 && !switched) {
      lambda = 4.0 * config.lambda;
    }

    const auto batch = batch_tensors(make_training_batch(dataset, config.crop, config.batch_size, rng));
    optimizer.zero_grad();
    const auto out = stage == Stage::kMe ? me_step(models, batch)
                                         : compressor_step(models, batch, stage, lambda, config);
    const double loss = out.loss.item<double>();
    if (!std::isfinite(loss)) {
      fail(ErrorKind::kNumeric, "non-finite loss at step " + std::to_string(step));
    }
    out.loss.backward();
    optimizer.step();

    result.history.push_back({step, loss, out.distortion, out.rate_bpp, lambda});
    if (csv && (i % config.log_every == 0 || i + 1 == config.max_steps)) {
      csv << step << ',' << loss << ',' << out.distortion << ',' << out.rate_bpp << ',' << lambda
          << '\n';
    }

    if (plateau.update(loss)) {
      if (stage == Stage::kS3 && config.schedule.points().empty() && !switched) {
        switched = true;
        result.lambda_switch_step = step + 1;
      } else if (config.halve_on_plateau) {
        learning_rate *= 0.5;
        for (auto& group : optimizer.param_groups()) {
          static_cast<torch::optim::AdamOptions&>(group.options()).lr(learning_rate);
        }
      }
    }
  }

  for (auto& [name, module] : models.groups()) set_trainable(*module, true);
  models.set_training(false);
  result.info.step = start + config.max_steps;
  if (!result.info.has_stage(to_string(stage))) result.info.stages.push_back(to_string(stage));
  if (!config.checkpoint_out.empty()) save_checkpoint(config.checkpoint_out, models, result.info);
  return result;
}

TrainResult run_training(const TrainConfig& config) {
  std::vector<FramePair> dataset;
  if (config.manifest.empty()) {
    dataset = translation_dataset(config.synthetic_pairs, config.synthetic_size,
                                  config.synthetic_size, config.synthetic_max_shift, config.seed);
  } else {
    for (const auto& entry : read_manifest(config.manifest)) {
      dataset.push_back(load_manifest_pair(entry));
    }
  }

  if (!config.checkpoint_in.empty()) {
    auto loaded = load_checkpoint(config.checkpoint_in);
    return train_stage(*loaded.models, loaded.info, dataset, config);
  }
  ModelConfig model;
  if (config.model_preset == "standard") {
    model = ModelConfig::standard();
  } else if (config.model_preset == "smoke") {
    model = ModelConfig::smoke();
  } else if (config.model_preset == "baseline128") {
    model = ModelConfig::baseline128();
  } else {
    fail(ErrorKind::kConfiguration, "unknown model preset '" + config.model_preset + "'");
  }
  torch::manual_seed(config.seed);
  CodecModels models(model);
  return train_stage(models, CheckpointInfo{}, dataset, config);
}

}  // namespace devc
