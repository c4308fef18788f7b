#pragma once

// P-frame encode/decode: motion estimation on luma, motion coding and
// refinement, warping of all three planes with the shared motion, residual
// coding per plane, frame refinement, and the bypass switch.

#include <torch/torch.h>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "devc/bitstream.hpp"
#include "devc/compressor.hpp"
#include "devc/config.hpp"
#include "devc/frame_io.hpp"
#include "devc/motion.hpp"
#include "devc/refine.hpp"

namespace devc {

/// All networks of the codec. Holders share ownership, so copies alias.
struct CodecModels {
  explicit CodecModels(const ModelConfig& config);

  ModelConfig config;
  MotionEstimator motion{nullptr};
  Compressor mv_compressor{nullptr};
  Compressor residual_compressor{nullptr};
  RefineNet frame_refine{nullptr};
  RefineNet mv_refine{nullptr};

  /// Ablation switches; encoder and decoder must agree.
  bool use_frame_refine = true;
  bool use_mv_refine = true;

  /// Motion-side network invocations made by encode/decode.
  struct Counters {
    int motion_estimation = 0;
    int mv_decode = 0;
    int mv_refine = 0;
  } counters;

  /// Named weight groups in checkpoint order.
  std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> groups() const;
  void set_training(bool on);
  void to(torch::Dtype dtype);
  std::int64_t parameter_count() const;
};

struct RDStats {
  std::uint64_t total_bits = 0;
  std::uint64_t header_bits = 0;
  std::uint64_t mv_bits = 0;
  std::uint64_t residual_bits = 0;
  double bpp = 0.0;
  double msssim = 0.0;
  double psnr_db = 0.0;
  /// Model information content of all coded symbols.
  double estimated_bits = 0.0;
  /// Range-coder output only (no container or payload headers).
  std::uint64_t coder_bits = 0;
  CodingMode mode = CodingMode::kMotionCompensated;
};

struct EncodeOptions {
  std::optional<CodingMode> force_mode;
};

struct EncodeResult {
  Bitstream bitstream;
  std::vector<std::uint8_t> bytes;
  RDStats stats;
  YuvFrame reconstruction;
};

EncodeResult encode_pframe(const FramePair& pair, CodecModels& models,
                           const EncodeOptions& options = {});
YuvFrame decode_pframe(const YuvFrame& reference, const Bitstream& bitstream,
                       CodecModels& models);
YuvFrame decode_pframe(const YuvFrame& reference, std::span<const std::uint8_t> bytes,
                       CodecModels& models);

/// Bypass iff the summed squared MCFD exceeds the summed squared FD; a tie
/// keeps motion compensation.
CodingMode bypass_decide(std::span<const torch::Tensor> fd, std::span<const torch::Tensor> mcfd);

/// Padded coding size of one luma dimension (multiple of 32, at least 128).
int padded_extent(int extent);

/// [1,1,H,W] float tensor in [0,1] and back (rounded, clamped).
torch::Tensor to_tensor(const Plane<std::uint8_t>& plane);
Plane<std::uint8_t> to_plane(const torch::Tensor& unit);

}  // namespace devc
