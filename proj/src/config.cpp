#include "devc/config.hpp"

#include <fstream>
#include <sstream>

#include "devc/error.hpp"

namespace devc {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorKind::kConfiguration,
           "line " + std::to_string(line_no) + ": expected key = value");
    }
    kv.values_[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfiguration, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValues::get(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kConfiguration, "'" + key + "' is not a number: " + it->second);
  }
}

int KeyValues::get(const std::string& key, int fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    fail(ErrorKind::kConfiguration, "'" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValues::get(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(ErrorKind::kConfiguration, "'" + key + "' is not a boolean: " + it->second);
}

std::string KeyValues::to_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

void CompressorConfig::validate() const {
  if (in_channels != 1 && in_channels != 2) {
    fail(ErrorKind::kConfiguration, "compressor in_channels must be 1 or 2");
  }
  if (encoder_out_channels < latent_channels) {
    fail(ErrorKind::kConfiguration, "encoder_out_channels must be >= latent_channels");
  }
  if (!attention && encoder_out_channels != latent_channels) {
    fail(ErrorKind::kConfiguration,
         "without attention the encoder output is the latent; channel counts must agree");
  }
  if (internal_channels <= 0 || latent_channels <= 0 || hyper_channels <= 0 ||
      mixture_components <= 0 || context_features <= 0 || entropy_hidden <= 0) {
    fail(ErrorKind::kConfiguration, "compressor widths must be positive");
  }
  if (!(signal_gain > 0.0)) fail(ErrorKind::kConfiguration, "signal_gain must be positive");
}

void RefineNetConfig::validate() const {
  if (scales < 2) fail(ErrorKind::kConfiguration, "refine-net needs at least 2 scales");
  if (channels <= 0 || n_resblocks < 0 || in_channels <= 0 || out_channels <= 0) {
    fail(ErrorKind::kConfiguration, "refine-net widths must be positive");
  }
}

ModelConfig ModelConfig::standard() {
  ModelConfig c;
  c.mv_compressor.in_channels = 2;
  c.mv_compressor.signal_gain = c.motion.max_displacement / 2.0;
  c.residual_compressor.in_channels = 1;
  c.frame_refine = RefineNetConfig{2, 1, 3, 64, 2};
  c.mv_refine = RefineNetConfig{2, 2, 3, 64, 2};
  return c;
}

ModelConfig ModelConfig::baseline128() {
  ModelConfig c = standard();
  for (auto* comp : {&c.mv_compressor, &c.residual_compressor}) {
    comp->internal_channels = 128;
    comp->encoder_out_channels = 128;
    comp->latent_channels = 128;
    comp->hyper_channels = 128;
    comp->attention = false;
  }
  return c;
}

ModelConfig ModelConfig::smoke() {
  ModelConfig c = standard();
  c.motion.feature_channels = 12;
  c.motion.upsampler_channels = 12;
  c.motion.larb = LarbConfig{1, 12, 3};
  c.motion.max_displacement = 16.0;
  c.mv_compressor.signal_gain = c.motion.max_displacement / 2.0;
  for (auto* comp : {&c.mv_compressor, &c.residual_compressor}) {
    comp->internal_channels = 24;
    comp->encoder_out_channels = 32;
    comp->latent_channels = 16;
    comp->hyper_channels = 16;
    comp->context_features = 2;
    comp->entropy_hidden = 8;
  }
  c.frame_refine = RefineNetConfig{2, 1, 3, 16, 1};
  c.mv_refine = RefineNetConfig{2, 2, 2, 12, 1};
  return c;
}

void ModelConfig::validate() const {
  mv_compressor.validate();
  residual_compressor.validate();
  frame_refine.validate();
  mv_refine.validate();
  if (mv_compressor.in_channels != 2 || residual_compressor.in_channels != 1) {
    fail(ErrorKind::kConfiguration,
         "motion compressor takes 2 channels and residual compressor takes 1");
  }
  if (frame_refine.in_channels != 2 || frame_refine.out_channels != 1 ||
      mv_refine.in_channels != 2 || mv_refine.out_channels != 2) {
    fail(ErrorKind::kConfiguration, "refine-net channel layout mismatch");
  }
  if (motion.levels < 1 || motion.levels > 5 || motion.search_radius < 1 ||
      motion.feature_channels <= 0 || motion.larb.n_blocks < 0 ||
      motion.larb.channels <= 0 || motion.larb.attention_window <= 0 ||
      motion.larb.attention_window % 2 == 0 || motion.max_displacement <= 0) {
    fail(ErrorKind::kConfiguration, "invalid motion configuration");
  }
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

void put_compressor(KeyValues& kv, const std::string& p, const CompressorConfig& c) {
  kv.set(p + ".in_channels", std::to_string(c.in_channels));
  kv.set(p + ".internal_channels", std::to_string(c.internal_channels));
  kv.set(p + ".encoder_out_channels", std::to_string(c.encoder_out_channels));
  kv.set(p + ".latent_channels", std::to_string(c.latent_channels));
  kv.set(p + ".hyper_channels", std::to_string(c.hyper_channels));
  kv.set(p + ".mixture_components", std::to_string(c.mixture_components));
  kv.set(p + ".context_features", std::to_string(c.context_features));
  kv.set(p + ".entropy_hidden", std::to_string(c.entropy_hidden));
  kv.set(p + ".attention", c.attention ? "true" : "false");
  kv.set(p + ".signal_gain", format_double(c.signal_gain));
}

CompressorConfig get_compressor(const KeyValues& kv, const std::string& p,
                                CompressorConfig c) {
  c.in_channels = kv.get(p + ".in_channels", c.in_channels);
  c.internal_channels = kv.get(p + ".internal_channels", c.internal_channels);
  c.encoder_out_channels = kv.get(p + ".encoder_out_channels", c.encoder_out_channels);
  c.latent_channels = kv.get(p + ".latent_channels", c.latent_channels);
  c.hyper_channels = kv.get(p + ".hyper_channels", c.hyper_channels);
  c.mixture_components = kv.get(p + ".mixture_components", c.mixture_components);
  c.context_features = kv.get(p + ".context_features", c.context_features);
  c.entropy_hidden = kv.get(p + ".entropy_hidden", c.entropy_hidden);
  c.attention = kv.get(p + ".attention", c.attention);
  c.signal_gain = kv.get(p + ".signal_gain", c.signal_gain);
  return c;
}

void put_refine(KeyValues& kv, const std::string& p, const RefineNetConfig& c) {
  kv.set(p + ".in_channels", std::to_string(c.in_channels));
  kv.set(p + ".out_channels", std::to_string(c.out_channels));
  kv.set(p + ".scales", std::to_string(c.scales));
  kv.set(p + ".channels", std::to_string(c.channels));
  kv.set(p + ".n_resblocks", std::to_string(c.n_resblocks));
}

RefineNetConfig get_refine(const KeyValues& kv, const std::string& p, RefineNetConfig c) {
  c.in_channels = kv.get(p + ".in_channels", c.in_channels);
  c.out_channels = kv.get(p + ".out_channels", c.out_channels);
  c.scales = kv.get(p + ".scales", c.scales);
  c.channels = kv.get(p + ".channels", c.channels);
  c.n_resblocks = kv.get(p + ".n_resblocks", c.n_resblocks);
  return c;
}

}  // namespace

KeyValues ModelConfig::to_key_values() const {
  KeyValues kv;
  kv.set("motion.feature_channels", std::to_string(motion.feature_channels));
  kv.set("motion.search_radius", std::to_string(motion.search_radius));
  kv.set("motion.levels", std::to_string(motion.levels));
  kv.set("motion.upsampler_channels", std::to_string(motion.upsampler_channels));
  kv.set("motion.larb.n_blocks", std::to_string(motion.larb.n_blocks));
  kv.set("motion.larb.channels", std::to_string(motion.larb.channels));
  kv.set("motion.larb.attention_window", std::to_string(motion.larb.attention_window));
  kv.set("motion.max_displacement", format_double(motion.max_displacement));
  put_compressor(kv, "mv_compressor", mv_compressor);
  put_compressor(kv, "residual_compressor", residual_compressor);
  put_refine(kv, "frame_refine", frame_refine);
  put_refine(kv, "mv_refine", mv_refine);
  return kv;
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c = standard();
  c.motion.feature_channels = kv.get("motion.feature_channels", c.motion.feature_channels);
  c.motion.search_radius = kv.get("motion.search_radius", c.motion.search_radius);
  c.motion.levels = kv.get("motion.levels", c.motion.levels);
  c.motion.upsampler_channels =
      kv.get("motion.upsampler_channels", c.motion.upsampler_channels);
  c.motion.larb.n_blocks = kv.get("motion.larb.n_blocks", c.motion.larb.n_blocks);
  c.motion.larb.channels = kv.get("motion.larb.channels", c.motion.larb.channels);
  c.motion.larb.attention_window =
      kv.get("motion.larb.attention_window", c.motion.larb.attention_window);
  c.motion.max_displacement = kv.get("motion.max_displacement", c.motion.max_displacement);
  c.mv_compressor = get_compressor(kv, "mv_compressor", c.mv_compressor);
  c.residual_compressor = get_compressor(kv, "residual_compressor", c.residual_compressor);
  c.frame_refine = get_refine(kv, "frame_refine", c.frame_refine);
  c.mv_refine = get_refine(kv, "mv_refine", c.mv_refine);
  c.validate();
  return c;
}

std::uint64_t ModelConfig::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char ch : to_text()) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace devc
