// devc command-line front end: encode, decode, train, eval, plus init and
// params helpers.

#include <CLI11.hpp>
#include <json.hpp>
#include <torch/torch.h>

#include <fstream>
#include <iostream>
#include <iterator>

#include "devc/checkpoint.hpp"
#include "devc/codec.hpp"
#include "devc/error.hpp"
#include "devc/evaluation.hpp"
#include "devc/training.hpp"

namespace fs = std::filesystem;
using namespace devc;

namespace {

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUsage: return 2;
    case ErrorKind::kConfiguration: return 3;
    case ErrorKind::kIngestion: return 4;
    case ErrorKind::kInvalidGeometry: return 5;
    case ErrorKind::kDecode: return 6;
    case ErrorKind::kContainer: return 7;
    case ErrorKind::kProtocol: return 8;
    case ErrorKind::kNumeric: return 9;
  }
  return 1;
}

int report_error(std::string_view kind, const std::string& message, int code) {
  nlohmann::json j{{"error", kind}, {"message", message}};
  std::cerr << j.dump() << '\n';
  return code;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kUsage, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kUsage, "cannot write " + path.string());
}

ModelConfig preset(const std::string& name) {
  if (name == "standard") return ModelConfig::standard();
  if (name == "smoke") return ModelConfig::smoke();
  if (name == "baseline128") return ModelConfig::baseline128();
  fail(ErrorKind::kConfiguration, "unknown model preset '" + name + "'");
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  const fs::path p(value);
  return p.is_absolute() ? p : base / p;
}

}  // namespace

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  CLI::App app{"DEVC learned P-frame codec"};
  app.require_subcommand(1);

  std::string ref, target, model, out, in, stage, config_path, manifest, metric_planes = "yuv";
  std::string preset_name = "standard";
  int width = 0, height = 0;
  std::uint64_t seed = 1;
  std::uint64_t budget = kClicBudgetBytes;
  bool force_bypass = false, force_mc = false;

  auto* encode = app.add_subcommand("encode", "encode one P-frame");
  encode->add_option("--ref", ref, "reference frame (.png or raw .yuv)")->required();
  encode->add_option("--target", target, "target frame")->required();
  encode->add_option("--model", model, "checkpoint")->required();
  encode->add_option("--out", out, "output container")->required();
  encode->add_option("--width", width, "raw frame width");
  encode->add_option("--height", height, "raw frame height");
  auto* fb = encode->add_flag("--force-bypass", force_bypass, "always code the frame difference");
  encode->add_flag("--force-mc", force_mc, "always use motion compensation")->excludes(fb);

  auto* decode = app.add_subcommand("decode", "decode one P-frame");
  decode->add_option("--ref", ref, "reference frame")->required();
  decode->add_option("--in", in, "container")->required();
  decode->add_option("--model", model, "checkpoint")->required();
  decode->add_option("--out", out, "reconstruction (.png or raw .yuv)")->required();

  auto* train = app.add_subcommand("train", "run one training stage");
  train->add_option("--stage", stage, "me, s1, s2 or s3")
      ->required()
      ->check(CLI::IsMember({"me", "s1", "s2", "s3"}));
  train->add_option("--config", config_path, "key = value training config")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a manifest of pairs");
  eval->add_option("--manifest", manifest, "id<TAB>ref<TAB>target lines")->required();
  eval->add_option("--model", model, "checkpoint")->required();
  eval->add_option("--budget", budget, "total byte budget");
  eval->add_option("--out", out, "output directory")->required();
  eval->add_option("--metric-planes", metric_planes, "y or yuv")
      ->check(CLI::IsMember({"y", "yuv"}));

  auto* init = app.add_subcommand("init", "write an untrained checkpoint");
  init->add_option("--preset", preset_name, "standard, smoke or baseline128");
  init->add_option("--seed", seed, "weight initialization seed");
  init->add_option("--out", out, "checkpoint")->required();

  auto* params = app.add_subcommand("params", "print parameter counts per weight group");
  params->add_option("--preset", preset_name, "standard, smoke or baseline128");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report_error("usage", e.what(), 2);
  }

  try {
    if (*encode) {
      auto loaded = load_checkpoint(model);
      const auto pair = load_manifest_pair({fs::path(target).stem().string(), ref, target}, width,
                                           height);
      EncodeOptions options;
      if (force_bypass) options.force_mode = CodingMode::kBypass;
      if (force_mc) options.force_mode = CodingMode::kMotionCompensated;
      const auto result = encode_pframe(pair, *loaded.models, options);
      write_bytes(out, result.bytes);
      const auto& s = result.stats;
      nlohmann::json j{{"bytes", result.bytes.size()},
                       {"total_bits", s.total_bits},
                       {"mv_bits", s.mv_bits},
                       {"residual_bits", s.residual_bits},
                       {"header_bits", s.header_bits},
                       {"bpp", s.bpp},
                       {"msssim", s.msssim},
                       {"psnr", s.psnr_db},
                       {"estimated_bits", s.estimated_bits},
                       {"mode", s.mode == CodingMode::kBypass ? "bypass" : "mc"}};
      std::cout << j.dump() << '\n';
    } else if (*decode) {
      auto loaded = load_checkpoint(model);
      const auto bitstream = unpack(read_bytes(in));
      const auto format = guess_format(ref);
      const auto reference = load_frame(ref, format, bitstream.width, bitstream.height);
      save_frame(out, decode_pframe(reference, bitstream, *loaded.models));
    } else if (*train) {
      const fs::path cfg_path(config_path);
      auto kv = KeyValues::load(cfg_path);
      if (kv.has("stage") && kv.get("stage", std::string{}) != stage) {
        fail(ErrorKind::kConfiguration, "config stage '" + kv.get("stage", std::string{}) +
                                            "' contradicts --stage " + stage);
      }
      kv.set("stage", stage);
      const auto base = cfg_path.parent_path();
      for (const char* key : {"checkpoint_in", "checkpoint_out", "metrics", "manifest"}) {
        if (kv.has(key)) kv.set(key, resolve(base, kv.get(key, std::string{})).string());
      }
      const auto config = TrainConfig::from_key_values(kv);
      const auto result = run_training(config);
      nlohmann::json j{{"stage", stage},
                       {"steps", result.history.size()},
                       {"final_loss", result.history.empty() ? 0.0 : result.history.back().loss},
                       {"checkpoint", config.checkpoint_out.string()}};
      if (result.lambda_switch_step) j["lambda_switch_step"] = *result.lambda_switch_step;
      std::cout << j.dump() << '\n';
    } else if (*eval) {
      auto loaded = load_checkpoint(model);
      EvalOptions options;
      options.budget_bytes = budget;
      options.out_dir = out;
      options.planes = metric_planes == "y" ? MetricPlanes::kY : MetricPlanes::kYuv;
      const auto report = evaluate_corpus(read_manifest(manifest), *loaded.models, options);
      nlohmann::json j{{"frames", report.frames.size()},
                       {"failures", report.failures.size()},
                       {"weighted_msssim", report.weighted_msssim},
                       {"weighted_psnr", report.weighted_psnr},
                       {"total_bytes", report.total_bytes},
                       {"budget_ok", report.budget_ok},
                       {"mv_bit_share", report.mv_bit_share},
                       {"bypass_fraction", report.bypass_fraction}};
      std::cout << j.dump() << '\n';
      for (const auto& f : report.failures) {
        report_error("frame", f.identifier + ": " + f.message, 1);
      }
      if (!report.ok()) return 1;
    } else if (*init) {
      torch::manual_seed(seed);
      CodecModels models(preset(preset_name));
      save_checkpoint(out, models, CheckpointInfo{});
    } else if (*params) {
      CodecModels models(preset(preset_name));
      nlohmann::json j;
      for (const auto& [name, module] : models.groups()) j[name] = parameter_count(*module);
      j["total"] = models.parameter_count();
      std::cout << j.dump(2) << '\n';
    }
  } catch (const Error& e) {
    return report_error(to_string(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::exception& e) {
    return report_error("internal", e.what(), 1);
  }
  return 0;
}
