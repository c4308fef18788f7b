#include "devc/codec.hpp"

#include <algorithm>
#include <cmath>

#include "devc/error.hpp"
#include "devc/metrics.hpp"

namespace devc {

namespace F = torch::nn::functional;

CodecModels::CodecModels(const ModelConfig& cfg)
    : config(cfg),
      motion(cfg.motion),
      mv_compressor(cfg.mv_compressor),
      residual_compressor(cfg.residual_compressor),
      frame_refine(cfg.frame_refine),
      mv_refine(cfg.mv_refine) {
  cfg.validate();
}

std::vector<std::pair<std::string, std::shared_ptr<torch::nn::Module>>> CodecModels::groups()
    const {
  return {{"flow_net", motion.ptr()},
          {"mv_refine", mv_refine.ptr()},
          {"mv_compressor", mv_compressor.ptr()},
          {"residual_compressor", residual_compressor.ptr()},
          {"frame_refine", frame_refine.ptr()}};
}

void CodecModels::set_training(bool on) {
  for (auto& [name, module] : groups()) module->train(on);
}

void CodecModels::to(torch::Dtype dtype) {
  for (auto& [name, module] : groups()) module->to(dtype);
}

std::int64_t CodecModels::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, module] : groups()) n += devc::parameter_count(*module);
  return n;
}

int padded_extent(int extent) {
  return std::max(128, (extent + 31) / 32 * 32);
}

torch::Tensor to_tensor(const Plane<std::uint8_t>& plane) {
  auto t = torch::empty({1, 1, plane.height, plane.width}, torch::kFloat);
  auto* d = t.data_ptr<float>();
  for (std::size_t i = 0; i < plane.size(); ++i) d[i] = static_cast<float>(plane.data[i] / 255.0);
  return t;
}

Plane<std::uint8_t> to_plane(const torch::Tensor& unit) {
  const auto t = unit.detach().to(torch::kFloat).contiguous();
  Plane<std::uint8_t> plane(static_cast<int>(t.size(-1)), static_cast<int>(t.size(-2)));
  const float* d = t.data_ptr<float>();
  for (std::size_t i = 0; i < plane.size(); ++i) {
    plane.data[i] = static_cast<std::uint8_t>(std::clamp(std::round(d[i] * 255.0f), 0.0f, 255.0f));
  }
  return plane;
}

CodingMode bypass_decide(std::span<const torch::Tensor> fd, std::span<const torch::Tensor> mcfd) {
  if (fd.size() != mcfd.size()) {
    fail(ErrorKind::kInvalidGeometry, "FD and MCFD plane counts differ");
  }
  double fd_energy = 0.0;
  double mcfd_energy = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    if (fd[i].sizes() != mcfd[i].sizes()) {
      fail(ErrorKind::kInvalidGeometry, "FD and MCFD planes differ in shape");
    }
    fd_energy += fd[i].to(torch::kDouble).square().sum().item<double>();
    mcfd_energy += mcfd[i].to(torch::kDouble).square().sum().item<double>();
  }
  return mcfd_energy > fd_energy ? CodingMode::kBypass : CodingMode::kMotionCompensated;
}

namespace {

struct Geometry {
  int width = 0;
  int height = 0;
  int pad_right = 0;
  int pad_bottom = 0;

  int plane_width(int p) const { return p == 0 ? width : width / 2; }
  int plane_height(int p) const { return p == 0 ? height : height / 2; }
  int padded_width(int p) const { return (plane_width(0) + pad_right) >> (p == 0 ? 0 : 1); }
  int padded_height(int p) const { return (plane_height(0) + pad_bottom) >> (p == 0 ? 0 : 1); }
};

std::vector<torch::Tensor> padded_planes(const YuvFrame& frame, const Geometry& g) {
  std::vector<torch::Tensor> out;
  for (int p = 0; p < 3; ++p) {
    const int scale = p == 0 ? 1 : 2;
    out.push_back(pad_edges(to_tensor(frame.plane(p)), g.pad_right / scale, g.pad_bottom / scale));
  }
  return out;
}

/// Decoded motion latents -> flow in pixels (after optional refinement).
torch::Tensor reconstruct_flow(CodecModels& models, const torch::Tensor& y_hat, int height,
                               int width) {
  const double m = models.config.motion.max_displacement;
  auto flow = models.mv_compressor->synthesize(y_hat, height, width) * (2.0 * m) - m;
  if (models.use_mv_refine) {
    ++models.counters.mv_refine;
    flow = refine_decoded_motion(models.mv_refine, flow);
  }
  return flow;
}

std::vector<torch::Tensor> predictions(const std::vector<torch::Tensor>& ref,
                                       const torch::Tensor& luma_flow) {
  const auto cflow = chroma_flow(luma_flow);
  return {warp(ref[0], luma_flow), warp(ref[1], cflow), warp(ref[2], cflow)};
}

torch::Tensor reconstruct_plane(CodecModels& models, const torch::Tensor& prediction,
                                const torch::Tensor& y_hat) {
  const auto residual = models.residual_compressor->synthesize(
      y_hat, static_cast<int>(prediction.size(2)), static_cast<int>(prediction.size(3)));
  if (models.use_frame_refine) return refine_frame(models.frame_refine, prediction, residual);
  return (prediction + residual).clamp(0.0, 1.0);
}

YuvFrame assemble(const std::vector<torch::Tensor>& planes, const Geometry& g) {
  YuvFrame frame;
  for (int p = 0; p < 3; ++p) {
    frame.plane(p) = to_plane(crop(planes[p], g.plane_height(p), g.plane_width(p)));
  }
  return frame;
}

void require_supported(int width, int height) {
  if (width % 2 || height % 2 || width <= 0 || height <= 0 || width > 65535 || height > 65535) {
    fail(ErrorKind::kInvalidGeometry, "frame size not representable in the container");
  }
}

}  // namespace

EncodeResult encode_pframe(const FramePair& pair, CodecModels& models,
                           const EncodeOptions& options) {
  pair.reference.validate();
  pair.target.validate();
  if (pair.reference.width() != pair.target.width() ||
      pair.reference.height() != pair.target.height()) {
    fail(ErrorKind::kInvalidGeometry, "reference and target differ in size");
  }
  torch::NoGradGuard guard;
  models.set_training(false);

  Geometry g{pair.target.width(), pair.target.height(), 0, 0};
  require_supported(g.width, g.height);
  g.pad_right = padded_extent(g.width) - g.width;
  g.pad_bottom = padded_extent(g.height) - g.height;
  const int hp = g.padded_height(0);
  const int wp = g.padded_width(0);

  const auto ref = padded_planes(pair.reference, g);
  const auto target = padded_planes(pair.target, g);

  EncodeResult result;
  Bitstream& bs = result.bitstream;
  bs.width = static_cast<std::uint16_t>(g.width);
  bs.height = static_cast<std::uint16_t>(g.height);
  bs.pad_right = static_cast<std::uint8_t>(g.pad_right);
  bs.pad_bottom = static_cast<std::uint8_t>(g.pad_bottom);

  double estimated_bits = 0.0;
  std::vector<torch::Tensor> pred = ref;
  CodingMode mode = options.force_mode.value_or(CodingMode::kMotionCompensated);
  Payload mv_hyper_payload, mv_payload;
  double mv_estimate = 0.0;

  if (options.force_mode != CodingMode::kBypass) {
    ++models.counters.motion_estimation;
    const auto flow = models.motion->forward(ref[0], target[0]).finest();
    const double m = models.config.motion.max_displacement;
    const auto flow_unit = ((flow + m) / (2.0 * m)).clamp(0.0, 1.0);
    PayloadWriter hyper_writer, latent_writer;
    ++models.counters.mv_decode;
    const auto coded = models.mv_compressor->encode(flow_unit, hyper_writer, latent_writer);
    mv_hyper_payload = hyper_writer.finish();
    mv_payload = latent_writer.finish();
    mv_estimate = coded.estimated_bits;
    const auto decoded_flow = reconstruct_flow(models, coded.y_hat, hp, wp);
    auto mc_pred = predictions(ref, decoded_flow);

    if (!options.force_mode) {
      std::vector<torch::Tensor> fd, mcfd;
      for (int p = 0; p < 3; ++p) {
        const auto t = crop(target[p], g.plane_height(p), g.plane_width(p));
        fd.push_back(t - crop(ref[p], g.plane_height(p), g.plane_width(p)));
        mcfd.push_back(t - crop(mc_pred[p], g.plane_height(p), g.plane_width(p)));
      }
      mode = bypass_decide(fd, mcfd);
    }
    if (mode == CodingMode::kMotionCompensated) pred = std::move(mc_pred);
  }

  bs.mode = mode;
  if (mode == CodingMode::kMotionCompensated) {
    bs.stream(StreamSlot::kMvHyper) = mv_hyper_payload;
    bs.stream(StreamSlot::kMv) = mv_payload;
    estimated_bits += mv_estimate;
  }

  std::vector<torch::Tensor> recon;
  const StreamSlot slots[3] = {StreamSlot::kY, StreamSlot::kU, StreamSlot::kV};
  for (int p = 0; p < 3; ++p) {
    PayloadWriter writer;
    const auto coded = models.residual_compressor->encode(target[p] - pred[p], writer, writer);
    bs.stream(slots[p]) = writer.finish();
    estimated_bits += coded.estimated_bits;
    recon.push_back(reconstruct_plane(models, pred[p], coded.y_hat));
  }

  result.reconstruction = assemble(recon, g);
  result.bytes = pack(bs);

  RDStats& st = result.stats;
  st.mode = mode;
  st.total_bits = 8ull * result.bytes.size();
  for (const auto slot : {StreamSlot::kMv, StreamSlot::kMvHyper}) {
    if (bs.stream(slot)) {
      st.mv_bits += 8ull * bs.stream(slot)->serialized_size();
      st.coder_bits += 8ull * bs.stream(slot)->bytes.size();
    }
  }
  for (const auto slot : slots) {
    st.residual_bits += 8ull * bs.stream(slot)->serialized_size();
    st.coder_bits += 8ull * bs.stream(slot)->bytes.size();
  }
  st.header_bits = st.total_bits - st.mv_bits - st.residual_bits;
  st.bpp = static_cast<double>(st.total_bits) / (static_cast<double>(g.width) * g.height);
  st.estimated_bits = estimated_bits;
  st.msssim = ms_ssim(pair.target, result.reconstruction);
  st.psnr_db = psnr(pair.target, result.reconstruction);
  return result;
}

YuvFrame decode_pframe(const YuvFrame& reference, const Bitstream& bs, CodecModels& models) {
  reference.validate();
  if (reference.width() != bs.width || reference.height() != bs.height) {
    fail(ErrorKind::kDecode, "reference frame size does not match the container header");
  }
  torch::NoGradGuard guard;
  models.set_training(false);
  const Geometry g{bs.width, bs.height, bs.pad_right, bs.pad_bottom};
  if (padded_extent(g.width) - g.width != g.pad_right ||
      padded_extent(g.height) - g.height != g.pad_bottom) {
    fail(ErrorKind::kDecode, "padding fields are inconsistent with the frame size");
  }
  const int hp = g.padded_height(0);
  const int wp = g.padded_width(0);
  const auto ref = padded_planes(reference, g);

  std::vector<torch::Tensor> pred = ref;
  if (bs.mode == CodingMode::kMotionCompensated) {
    if (!bs.stream(StreamSlot::kMv) || !bs.stream(StreamSlot::kMvHyper)) {
      fail(ErrorKind::kDecode, "motion-compensated container without motion payloads");
    }
    PayloadReader hyper_reader(*bs.stream(StreamSlot::kMvHyper));
    PayloadReader latent_reader(*bs.stream(StreamSlot::kMv));
    ++models.counters.mv_decode;
    const auto decoded = models.mv_compressor->decode(hyper_reader, latent_reader, hp, wp);
    if (hyper_reader.remaining() != 0 || latent_reader.remaining() != 0) {
      fail(ErrorKind::kDecode, "motion payload holds unused symbols");
    }
    pred = predictions(ref, reconstruct_flow(models, decoded.y_hat, hp, wp));
  }

  std::vector<torch::Tensor> recon;
  const StreamSlot slots[3] = {StreamSlot::kY, StreamSlot::kU, StreamSlot::kV};
  for (int p = 0; p < 3; ++p) {
    const auto& payload = bs.stream(slots[p]);
    if (!payload) fail(ErrorKind::kDecode, "missing residual payload");
    PayloadReader reader(*payload);
    const auto decoded = models.residual_compressor->decode(reader, reader, g.padded_height(p),
                                                            g.padded_width(p));
    if (reader.remaining() != 0) fail(ErrorKind::kDecode, "residual payload holds unused symbols");
    recon.push_back(reconstruct_plane(models, pred[p], decoded.y_hat));
  }
  return assemble(recon, g);
}

YuvFrame decode_pframe(const YuvFrame& reference, std::span<const std::uint8_t> bytes,
                       CodecModels& models) {
  return decode_pframe(reference, unpack(bytes), models);
}

}  // namespace devc
