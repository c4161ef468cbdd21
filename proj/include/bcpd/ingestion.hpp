#pragma once

// Raw scalar monitoring series to a distributional sequence:
// scalar boxplot filter -> support estimate -> normalization to [0,1] -> time windows -> KDE.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcpd/density.hpp"

namespace bcpd {

struct RawSeries {
  std::vector<double> timestamps;  // seconds, non-decreasing
  std::vector<double> values;

  RawSeries() = default;
  RawSeries(std::vector<double> timestamps, std::vector<double> values);
  std::size_t size() const noexcept { return values.size(); }
};

enum class TimeFormat { epoch, iso8601 };

/// Seconds since 1970-01-01T00:00:00Z. Accepts YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|±HH:MM].
double parse_iso8601(const std::string& text);

/// CSV with header `timestamp,value`.
RawSeries read_raw_series(std::istream& in, TimeFormat format);
RawSeries read_raw_series_file(const std::string& path, TimeFormat format);

struct Segment {
  std::size_t window_index = 0;  // 0-based window position counted from the first timestamp
  double start_time = 0.0;
  std::vector<double> values;
};

struct DroppedSegment {
  std::size_t window_index = 0;
  std::size_t count = 0;
};

struct Segmentation {
  std::vector<Segment> segments;
  std::vector<DroppedSegment> dropped;
  std::size_t windows_total = 0;
};

inline constexpr std::size_t kDefaultMinSegmentCount = 30;

/// Contiguous windows of length `window` seconds aligned to the first timestamp.
Segmentation segment(const RawSeries& series, double window,
                     std::size_t min_count = kDefaultMinSegmentCount);

struct SupportEstimate {
  double lower = 0.0;
  double upper = 1.0;
  double margin_fraction = 0.0;

  SupportEstimate() = default;
  SupportEstimate(double lower, double upper, double margin_fraction = 0.0);
  double width() const noexcept { return upper - lower; }
};

/// [min − margin·range, max + margin·range].
SupportEstimate estimate_support(std::span<const double> values, double margin_fraction = 0.05);

struct NormalizedValues {
  std::vector<double> values;
  std::size_t clamped = 0;
};

NormalizedValues normalize(std::span<const double> values, const SupportEstimate& support);
std::vector<double> denormalize(std::span<const double> values, const SupportEstimate& support);

struct KdeResult {
  DensityFunction density;
  double bandwidth = 0.0;
  bool bandwidth_floored = false;
};

inline constexpr double kMinBandwidth = 1e-3;

/// 1.06 · min(σ, IQR/1.34) · n^{−1/5}.
double silverman_bandwidth(std::span<const double> samples);

/// Gaussian kernel with reflection at 0 and 1, renormalized, then 0.9 f + 0.1.
KdeResult kde(std::span<const double> samples, const Grid& grid,
              std::optional<double> bandwidth = std::nullopt);

struct IngestionConfig {
  double window = 86400.0;
  std::size_t min_count = kDefaultMinSegmentCount;
  double whisker = 1.5;
  double margin = 0.05;
  std::optional<SupportEstimate> support;  // externally estimated support overrides min/max
  std::size_t grid_nodes = Grid::kDefaultNodes;
  std::optional<double> bandwidth;         // nullopt: Silverman per segment
  unsigned threads = 1;
};

struct IngestionReport {
  std::size_t segments_total = 0;
  std::vector<DroppedSegment> segments_dropped;
  std::size_t scalar_outliers_removed = 0;
  std::size_t clamped_values = 0;
  SupportEstimate support;
  std::vector<double> bandwidth_per_segment;
  std::vector<std::size_t> window_indices;  // window of each emitted density
  std::size_t floored_bandwidths = 0;
};

struct IngestionOutput {
  std::vector<DensityFunction> densities;
  IngestionReport report;

  DistributionalSequence sequence() const { return DistributionalSequence(densities); }
};

/// Throws StructuralError when fewer than 4 segments survive.
IngestionOutput build_sequence(const RawSeries& series, const IngestionConfig& config);

nlohmann::json to_json(const IngestionReport& report);

}  // namespace bcpd
