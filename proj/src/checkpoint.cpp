#include "devc/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "devc/error.hpp"

namespace devc {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'V', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void u64(std::uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& in) : in_(in) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    const auto* p = take(4);
    return std::uint32_t{p[0]} << 24 | std::uint32_t{p[1]} << 16 | std::uint32_t{p[2]} << 8 | p[3];
  }
  std::uint64_t u64() {
    const std::uint64_t hi = u32();
    return hi << 32 | u32();
  }
  std::string text() {
    const auto n = u32();
    const auto* p = take(n);
    return {reinterpret_cast<const char*>(p), n};
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > in_.size() - pos_) fail(ErrorKind::kContainer, "checkpoint truncated");
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  const std::vector<std::uint8_t>& in_;
  std::size_t pos_ = 0;
};

std::map<std::string, torch::Tensor> named_state(const torch::nn::Module& module) {
  std::map<std::string, torch::Tensor> state;
  for (const auto& p : module.named_parameters()) state[p.key()] = p.value();
  for (const auto& b : module.named_buffers()) state[b.key()] = b.value();
  return state;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? "," : "") + parts[i];
  return out;
}

std::vector<std::string> split(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

}  // namespace

bool CheckpointInfo::has_stage(const std::string& stage) const {
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

std::vector<std::uint8_t> serialize_checkpoint(const CodecModels& models,
                                               const CheckpointInfo& info) {
  static_assert(std::endian::native == std::endian::little);
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.text(models.config.to_text());
  w.u64(models.config.fingerprint());

  KeyValues meta;
  meta.set("stages", join(info.stages));
  meta.set("step", std::to_string(info.step));
  meta.set("use_frame_refine", models.use_frame_refine ? "true" : "false");
  meta.set("use_mv_refine", models.use_mv_refine ? "true" : "false");
  w.text(meta.to_text());

  const auto groups = models.groups();
  w.u32(static_cast<std::uint32_t>(groups.size()));
  for (const auto& [name, module] : groups) {
    w.text(name);
    const auto state = named_state(*module);
    w.u32(static_cast<std::uint32_t>(state.size()));
    for (const auto& [key, value] : state) {
      const auto t = value.detach().contiguous();
      if (t.scalar_type() != torch::kFloat && t.scalar_type() != torch::kDouble) {
        fail(ErrorKind::kContainer, "unsupported tensor type for " + name + "." + key);
      }
      w.text(key);
      w.u8(t.scalar_type() == torch::kFloat ? 0 : 1);
      w.u8(static_cast<std::uint8_t>(t.dim()));
      for (const auto d : t.sizes()) w.u64(static_cast<std::uint64_t>(d));
      w.raw(t.data_ptr(), t.numel() * t.element_size());
    }
  }
  return w.take();
}

LoadedCheckpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  if (std::memcmp(r.take(sizeof kMagic), kMagic, sizeof kMagic) != 0) {
    fail(ErrorKind::kContainer, "not a checkpoint file (bad magic)");
  }
  if (const auto version = r.u32(); version != kVersion) {
    fail(ErrorKind::kContainer, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto config = ModelConfig::from_key_values(KeyValues::parse(r.text()));
  LoadedCheckpoint loaded;
  loaded.info.fingerprint = r.u64();
  if (loaded.info.fingerprint != config.fingerprint()) {
    fail(ErrorKind::kContainer, "checkpoint config fingerprint mismatch");
  }
  const auto meta = KeyValues::parse(r.text());
  loaded.info.stages = split(meta.get("stages", std::string{}));
  loaded.info.step = std::stoll(meta.get("step", std::string{"0"}));

  loaded.models = std::make_unique<CodecModels>(config);
  auto& models = *loaded.models;
  models.use_frame_refine = meta.get("use_frame_refine", true);
  models.use_mv_refine = meta.get("use_mv_refine", true);

  torch::NoGradGuard guard;
  const auto groups = models.groups();
  const auto group_count = r.u32();
  if (group_count != groups.size()) fail(ErrorKind::kContainer, "checkpoint group count mismatch");
  for (const auto& [name, module] : groups) {
    if (r.text() != name) fail(ErrorKind::kContainer, "checkpoint group order mismatch at " + name);
    auto state = named_state(*module);
    const auto count = r.u32();
    if (count != state.size()) fail(ErrorKind::kContainer, "tensor count mismatch in " + name);
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto key = r.text();
      const auto it = state.find(key);
      if (it == state.end()) fail(ErrorKind::kContainer, "unknown tensor " + name + "." + key);
      const auto dtype = r.u8() == 0 ? torch::kFloat : torch::kDouble;
      std::vector<std::int64_t> dims(r.u8());
      for (auto& d : dims) d = static_cast<std::int64_t>(r.u64());
      if (it->second.sizes() != torch::IntArrayRef(dims)) {
        fail(ErrorKind::kContainer, "shape mismatch for " + name + "." + key);
      }
      auto source = torch::empty(dims, torch::TensorOptions().dtype(dtype));
      std::memcpy(source.data_ptr(), r.take(source.numel() * source.element_size()),
                  source.numel() * source.element_size());
      if (it->second.scalar_type() != dtype) it->second.set_data(it->second.to(dtype));
      it->second.copy_(source);
    }
  }
  if (!r.done()) fail(ErrorKind::kContainer, "trailing bytes after checkpoint");
  return loaded;
}

void save_checkpoint(const std::filesystem::path& path, const CodecModels& models,
                     const CheckpointInfo& info) {
  const auto bytes = serialize_checkpoint(models, info);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kUsage, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kUsage, "cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace devc
