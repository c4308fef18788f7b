#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace devc {

/// Flat `key = value` text with `#` comments.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get(const std::string& key, double fallback) const;
  int get(const std::string& key, int fallback) const;
  bool get(const std::string& key, bool fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string to_text() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct LarbConfig {
  int n_blocks = 2;
  int channels = 16;
  int attention_window = 7;
};

struct MotionConfig {
  int feature_channels = 16;
  int search_radius = 4;
  /// Levels of the flow pyramid; the flow net runs at 1/2^(levels-1) scale.
  int levels = 4;
  int upsampler_channels = 16;
  LarbConfig larb;
  double max_displacement = 64.0;
};

struct CompressorConfig {
  int in_channels = 1;
  int internal_channels = 64;
  int encoder_out_channels = 128;
  int latent_channels = 64;
  int hyper_channels = 64;
  int mixture_components = 3;
  /// Per-latent-channel feature width of the context and hyper branches.
  int context_features = 4;
  int entropy_hidden = 16;
  bool attention = true;
  /// The transforms see (x - centre) * signal_gain, centre being the middle
  /// of the input range; synthesis undoes it.
  double signal_gain = 1.0;

  void validate() const;
};

struct RefineNetConfig {
  int in_channels = 2;
  int out_channels = 1;
  int scales = 3;
  int channels = 64;
  int n_resblocks = 2;

  void validate() const;
};

struct ModelConfig {
  MotionConfig motion;
  CompressorConfig mv_compressor;
  CompressorConfig residual_compressor;
  RefineNetConfig frame_refine;
  RefineNetConfig mv_refine;

  /// Full-size defaults (64 latent channels, attention on).
  static ModelConfig standard();
  /// The 128-channel, attention-free comparison point.
  static ModelConfig baseline128();
  /// Reduced widths for single-core smoke training.
  static ModelConfig smoke();

  void validate() const;
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
  std::string to_text() const { return to_key_values().to_text(); }
  /// FNV-1a over the canonical text form.
  std::uint64_t fingerprint() const;
};

}  // namespace devc
