#include "devc/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "devc/error.hpp"

namespace devc {

bool within_budget(std::uint64_t total_bytes, std::uint64_t budget_bytes) {
  return total_bytes <= budget_bytes;
}

double mv_bit_share(std::span<const FrameScore> frames) {
  std::uint64_t mv = 0;
  std::uint64_t total = 0;
  for (const auto& f : frames) {
    mv += f.mv_bits;
    total += f.bits;
  }
  return total == 0 ? 0.0 : static_cast<double>(mv) / static_cast<double>(total);
}

CorpusReport summarize(std::vector<FrameScore> frames, std::uint64_t budget_bytes,
                       MetricPlanes planes) {
  CorpusReport report;
  report.frames = std::move(frames);
  report.budget_bytes = budget_bytes;
  report.planes = planes;
  std::uint64_t bits = 0;
  std::size_t bypass = 0;
  for (const auto& f : report.frames) {
    bits += f.bits;
    bypass += f.mode == "bypass";
  }
  report.total_bytes = (bits + 7) / 8;
  if (!report.frames.empty()) {
    report.weighted_msssim = aggregate_weighted(report.frames, Metric::kMsSsim);
    report.weighted_psnr = aggregate_weighted(report.frames, Metric::kPsnr);
    report.bypass_fraction = static_cast<double>(bypass) / report.frames.size();
  }
  report.mv_bit_share = mv_bit_share(report.frames);
  report.budget_ok = within_budget(report.total_bytes, budget_bytes);
  return report;
}

CorpusReport evaluate_corpus(const std::vector<ManifestEntry>& manifest, CodecModels& models,
                             const EvalOptions& options) {
  if (options.out_dir.empty()) fail(ErrorKind::kUsage, "evaluation needs an output directory");
  std::filesystem::create_directories(options.out_dir);

  std::vector<FrameScore> frames;
  std::vector<FrameFailure> failures;
  std::uint64_t disk_bytes = 0;
  for (const auto& entry : manifest) {
    try {
      const auto pair = load_manifest_pair(entry);
      const auto encoded = encode_pframe(pair, models);
      const auto container = options.out_dir / (entry.identifier + ".devc");
      {
        std::ofstream out(container, std::ios::binary);
        out.write(reinterpret_cast<const char*>(encoded.bytes.data()),
                  static_cast<std::streamsize>(encoded.bytes.size()));
        if (!out) fail(ErrorKind::kUsage, "cannot write " + container.string());
      }
      const auto size_on_disk = std::filesystem::file_size(container);
      std::ifstream in(container, std::ios::binary);
      std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                      std::istreambuf_iterator<char>());
      const auto decoded = decode_pframe(pair.reference, bytes, models);
      if (!(decoded == encoded.reconstruction)) {
        fail(ErrorKind::kDecode, "decoded frame differs from the encoder reconstruction");
      }
      FrameScore score;
      score.identifier = entry.identifier;
      score.size = pair.target.pixel_count();
      score.msssim = ms_ssim(pair.target, decoded, options.planes);
      score.psnr_db = psnr(pair.target, decoded, options.planes);
      score.bits = 8 * size_on_disk;
      score.bpp = static_cast<double>(score.bits) / static_cast<double>(score.size);
      score.mode = encoded.stats.mode == CodingMode::kBypass ? "bypass" : "mc";
      score.mv_bits = encoded.stats.mv_bits;
      frames.push_back(score);
      disk_bytes += size_on_disk;
    } catch (const std::exception& e) {
      failures.push_back({entry.identifier, e.what()});
    }
  }

  auto report = summarize(std::move(frames), options.budget_bytes, options.planes);
  report.failures = std::move(failures);
  report.total_bytes = disk_bytes;
  report.budget_ok = within_budget(disk_bytes, options.budget_bytes);

  write_csv(options.out_dir / "results.csv", report.frames);
  write_rd_plot(options.out_dir / "rd.svg", report.frames);
  write_report_json(options.out_dir / "report.json", report);
  return report;
}

void write_csv(const std::filesystem::path& path, std::span<const FrameScore> frames) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kUsage, "cannot write " + path.string());
  out << "identifier,size,bits,bpp,msssim,psnr,mode,mv_bits\n" << std::setprecision(10);
  for (const auto& f : frames) {
    out << f.identifier << ',' << f.size << ',' << f.bits << ',' << f.bpp << ',' << f.msssim << ','
        << f.psnr_db << ',' << f.mode << ',' << f.mv_bits << '\n';
  }
}

void write_rd_plot(const std::filesystem::path& path, std::span<const FrameScore> frames) {
  constexpr double kWidth = 640, kHeight = 480, kLeft = 70, kRight = 20, kTop = 20, kBottom = 50;
  double max_bpp = 0.1;
  double min_q = 1.0;
  for (const auto& f : frames) {
    max_bpp = std::max(max_bpp, f.bpp);
    min_q = std::min(min_q, f.msssim);
  }
  max_bpp *= 1.1;
  min_q = std::max(0.0, std::floor(min_q * 20.0) / 20.0 - 0.05);
  auto px = [&](double bpp) { return kLeft + bpp / max_bpp * (kWidth - kLeft - kRight); };
  auto py = [&](double q) {
    return kTop + (1.0 - (q - min_q) / (1.0 - min_q)) * (kHeight - kTop - kBottom);
  };

  std::ostringstream svg;
  svg << std::fixed << std::setprecision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
      << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double bpp = max_bpp * i / 5.0;
    const double q = min_q + (1.0 - min_q) * i / 5.0;
    svg << "<text x=\"" << px(bpp) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << std::setprecision(3) << bpp << "</text>\n";
    svg << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(q) + 4 << "\" text-anchor=\"end\">"
        << std::setprecision(3) << q << "</text>\n"
        << std::setprecision(2);
  }
  svg << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\">bits per pixel</text>\n";
  svg << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2
      << ")\">MS-SSIM</text>\n";
  for (const auto& f : frames) {
    svg << "<circle cx=\"" << px(f.bpp) << "\" cy=\"" << py(f.msssim) << "\" r=\"3\" fill=\""
        << (f.mode == "bypass" ? "#d62728" : "#1f77b4") << "\"><title>" << f.identifier
        << "</title></circle>\n";
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) fail(ErrorKind::kUsage, "cannot write " + path.string());
  out << svg.str();
}

void write_report_json(const std::filesystem::path& path, const CorpusReport& report) {
  nlohmann::json j;
  j["frames"] = report.frames.size();
  j["weighted_msssim"] = report.weighted_msssim;
  j["weighted_psnr"] = report.weighted_psnr;
  j["total_bytes"] = report.total_bytes;
  j["budget_bytes"] = report.budget_bytes;
  j["budget_ok"] = report.budget_ok;
  j["mv_bit_share"] = report.mv_bit_share;
  j["bypass_fraction"] = report.bypass_fraction;
  j["metric_planes"] = report.planes == MetricPlanes::kY ? "y" : "yuv";
  j["msssim_note"] =
      "frames under 160 pixels use fewer scales with renormalized leading weights";
  auto failures = nlohmann::json::array();
  for (const auto& f : report.failures) {
    failures.push_back({{"identifier", f.identifier}, {"error", f.message}});
  }
  j["failures"] = failures;
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kUsage, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace devc
