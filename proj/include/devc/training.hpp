#pragma once

// Loss functions and the staged training procedure:
//   me  flow estimator on the multi-level warping loss
//   s1  compressors only (MSE + rate), motion frozen
//   s2  compressors frozen, frame and motion refine-nets on MSE
//   s3  everything but the flow estimator, 1 - MS-SSIM + rate, lambda schedule

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "devc/checkpoint.hpp"
#include "devc/codec.hpp"
#include "devc/config.hpp"
#include "devc/frame_io.hpp"

namespace devc {

enum class Stage { kMe, kS1, kS2, kS3 };
std::string to_string(Stage stage);
Stage parse_stage(const std::string& name);

enum class DistortionKind { kMse, kMsSsim };
DistortionKind parse_distortion(const std::string& name);

/// lambda * D + R with R = rate_bits / (pixels of x per channel).
torch::Tensor rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                      const torch::Tensor& rate_bits, double lambda, DistortionKind kind);
torch::Tensor rd_loss(const torch::Tensor& x, const torch::Tensor& x_hat,
                      const torch::Tensor& rate_bits, double lambda, const std::string& kind);

/// Piecewise-constant lambda: the value of the last entry whose step <= step.
class LambdaSchedule {
 public:
  LambdaSchedule() = default;
  explicit LambdaSchedule(std::vector<std::pair<std::int64_t, double>> points);
  double at(std::int64_t step) const;
  const std::vector<std::pair<std::int64_t, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<std::int64_t, double>> points_;
};

struct TrainConfig {
  Stage stage = Stage::kS1;
  /// Residual lambda (MSE stages) or target lambda (s3).
  double lambda = 1024.0;
  double mv_lambda = 128.0;
  /// Empty: constant lambda, except s3 which starts at 4x lambda until the
  /// loss plateaus.
  LambdaSchedule schedule;
  int batch_size = 8;
  int crop = 256;
  std::uint64_t seed = 1;
  std::int64_t max_steps = 1000;
  double learning_rate = 1e-4;
  /// Plateau detection: improvement of the moving-average loss below
  /// `plateau_threshold` over `plateau_window` steps.
  int plateau_window = 200;
  double plateau_threshold = 0.01;
  /// Halve the learning rate at each plateau (s1, s2, me).
  bool halve_on_plateau = true;
  /// Weight of the decoded-flow term in s2.
  double flow_weight = 0.1;

  std::string model_preset = "standard";
  std::filesystem::path checkpoint_in;
  std::filesystem::path checkpoint_out;
  std::filesystem::path metrics_csv;
  /// Tab-separated manifest; empty selects the synthetic translation set.
  std::filesystem::path manifest;
  int synthetic_pairs = 8;
  int synthetic_size = 192;
  int synthetic_max_shift = 6;
  int log_every = 10;

  void validate() const;
  static TrainConfig from_key_values(const KeyValues& kv);
};

/// Random crop + horizontal flip, identical for both frames of a pair.
/// Frames smaller than the crop are skipped with a warning on stderr.
std::vector<FramePair> make_training_batch(const std::vector<FramePair>& dataset, int crop,
                                           int batch_size, std::mt19937_64& rng);
std::vector<FramePair> make_training_batch(const std::vector<FramePair>& dataset, int crop,
                                           int batch_size, std::uint64_t seed);

/// Planes of a batch as [B,1,h,w] unit tensors: {ref Y,U,V, target Y,U,V}.
struct BatchTensors {
  torch::Tensor ref[3];
  torch::Tensor target[3];
};
BatchTensors batch_tensors(const std::vector<FramePair>& batch);

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0.0;
  double distortion = 0.0;
  double rate_bpp = 0.0;
  double lambda = 0.0;
};

struct TrainResult {
  std::vector<StepRecord> history;
  CheckpointInfo info;
  /// Step at which the s3 lambda switched to its target (if it did).
  std::optional<std::int64_t> lambda_switch_step;
};

/// Checks stage prerequisites, trains `models` in place, appends to the
/// metrics CSV and writes the output checkpoint when configured.
TrainResult train_stage(CodecModels& models, const CheckpointInfo& info_in,
                        const std::vector<FramePair>& dataset, const TrainConfig& config);

/// Mean distortion/rate of the current models on whole pairs with the real
/// quantized path (no noise).
struct StageMetrics {
  double mse = 0.0;  // 4:1:1 weighted, unit scale
  double msssim = 0.0;
  double rate_bpp = 0.0;
};
StageMetrics measure(CodecModels& models, const std::vector<FramePair>& pairs);

/// Config-file driven entry point used by `devc train`.
TrainResult run_training(const TrainConfig& config);

}  // namespace devc
