#pragma once

// Corpus evaluation: encode and decode every manifest pair, score the
// decoded frames, aggregate by pixel count, and write the CSV, RD plot and
// JSON summary.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "devc/codec.hpp"
#include "devc/frame_io.hpp"
#include "devc/metrics.hpp"

namespace devc {

inline constexpr std::uint64_t kClicBudgetBytes = 3'900'000'000ull;

struct FrameFailure {
  std::string identifier;
  std::string message;
};

struct CorpusReport {
  std::vector<FrameScore> frames;
  std::vector<FrameFailure> failures;
  double weighted_msssim = 0.0;
  double weighted_psnr = 0.0;
  std::uint64_t total_bytes = 0;
  std::uint64_t budget_bytes = 0;
  bool budget_ok = false;
  /// Motion payload bits over all bits.
  double mv_bit_share = 0.0;
  double bypass_fraction = 0.0;
  MetricPlanes planes = MetricPlanes::kYuv;

  bool ok() const { return failures.empty(); }
};

bool within_budget(std::uint64_t total_bytes, std::uint64_t budget_bytes);
double mv_bit_share(std::span<const FrameScore> frames);

/// Fills the aggregate fields of a report from its frames. total_bytes is
/// taken from the frame bit counts.
CorpusReport summarize(std::vector<FrameScore> frames, std::uint64_t budget_bytes,
                       MetricPlanes planes = MetricPlanes::kYuv);

struct EvalOptions {
  std::uint64_t budget_bytes = kClicBudgetBytes;
  MetricPlanes planes = MetricPlanes::kYuv;
  /// Written files: <id>.devc containers, results.csv, rd.svg, report.json.
  std::filesystem::path out_dir;
};

CorpusReport evaluate_corpus(const std::vector<ManifestEntry>& manifest, CodecModels& models,
                             const EvalOptions& options);

void write_csv(const std::filesystem::path& path, std::span<const FrameScore> frames);
/// Bits per pixel against MS-SSIM, one point per frame.
void write_rd_plot(const std::filesystem::path& path, std::span<const FrameScore> frames);
void write_report_json(const std::filesystem::path& path, const CorpusReport& report);

}  // namespace devc
