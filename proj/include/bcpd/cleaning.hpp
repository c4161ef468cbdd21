#pragma once

// Outlier removal around change-point detection.
//
// Flagged densities are removed, detection runs on the remaining sub-sequence, and the detected
// position is reported back in the indexing of the original sequence.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcpd/changepoint.hpp"
#include "bcpd/density.hpp"

namespace bcpd {

struct Quartiles {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double iqr() const noexcept { return q3 - q1; }
};

/// Quantile by linear interpolation of order statistics (position p·(n−1)).
double quantile_linear(std::span<const double> sorted, double p);
Quartiles quartiles(std::span<const double> values);

struct BoxplotFilterResult {
  std::vector<double> values;        // retained, original order
  std::vector<std::size_t> kept;     // 0-based positions of retained values
  std::size_t removed = 0;
  bool too_few_samples = false;      // fewer than 4 samples: passed through untouched
  double lower_fence = 0.0;
  double upper_fence = 0.0;
};

inline constexpr double kDefaultWhisker = 1.5;

/// Upper-fence whisker of the clr-median-distance detector. At 1.5 the one-sided fence flags at
/// least one density in about 16% of homogeneous Beta sequences of length 100.
inline constexpr double kDefaultDetectorWhisker = 2.0;

/// Drops values outside [Q1 − whisker·IQR, Q3 + whisker·IQR].
BoxplotFilterResult scalar_boxplot_filter(std::span<const double> samples,
                                          double whisker = kDefaultWhisker);

/// Tuning keys shared by the detector interface. The region and the two whisker keys describe a
/// quantile-function detector (detection region, magnitude and variability whiskers); detectors
/// that do not use them ignore them.
struct DetectorConfig {
  double whisker = kDefaultDetectorWhisker;
  double region_lower = 0.2;
  double region_upper = 0.8;
  double mo_whisker = 1.5;
  double vo_whisker = 2.5;
};

/// Flags outlying densities. Sees the sequence read-only and returns ascending 1-based positions.
class OutlierDetector {
public:
  virtual ~OutlierDetector() = default;
  virtual std::string name() const = 0;
  virtual nlohmann::json params() const = 0;
  virtual std::vector<std::size_t> flag(const DistributionalSequence& seq) const = 0;
};

/// L² distance of each clr image from the pointwise median clr function, flagged above the upper
/// boxplot fence of those distances.
class ClrMedianDistanceDetector final : public OutlierDetector {
public:
  explicit ClrMedianDistanceDetector(DetectorConfig config = {});
  std::string name() const override { return "clr-median-distance"; }
  nlohmann::json params() const override;
  std::vector<std::size_t> flag(const DistributionalSequence& seq) const override;

  /// Distances used for flagging, in sequence order.
  std::vector<double> distances(const DistributionalSequence& seq) const;

private:
  DetectorConfig config_;
};

/// Never flags anything.
class NullDetector final : public OutlierDetector {
public:
  std::string name() const override { return "none"; }
  nlohmann::json params() const override { return nlohmann::json::object(); }
  std::vector<std::size_t> flag(const DistributionalSequence&) const override { return {}; }
};

/// Detector by registered name: "clr-median-distance" or "none".
std::unique_ptr<OutlierDetector> make_detector(const std::string& name, DetectorConfig config = {});

/// Ascending, duplicate-free 1-based indices.
std::vector<std::size_t> detect_distributional_outliers(const DistributionalSequence& seq,
                                                        const OutlierDetector& detector);

struct CleaningReport {
  std::vector<std::size_t> removed_indices;  // 1-based, ascending
  std::vector<std::size_t> kept_indices;     // 1-based, ascending
  std::vector<std::string> detector_tags;    // per removed index
  std::string detector;
  nlohmann::json params = nlohmann::json::object();

  /// Original index of the 1-based sub-sequence position.
  std::size_t original_index(std::size_t position) const;
};

struct CleanedSequence {
  CleaningReport report;
  std::vector<DensityFunction> densities;
};

/// Primary detector plus an optional secondary pass; flags are united.
CleanedSequence clean_sequence(const DistributionalSequence& seq, const OutlierDetector& primary,
                               const OutlierDetector* secondary = nullptr);

struct CleanDetectResult {
  CleaningReport report;
  DetectionResult detection;  // k_hat already in original indexing
};

CleanDetectResult clean_and_detect(const DistributionalSequence& seq, const DetectOptions& options,
                                   const OutlierDetector& primary,
                                   const OutlierDetector* secondary = nullptr,
                                   Method method = Method::bayes_clr);

nlohmann::json to_json(const CleaningReport& report);

}  // namespace bcpd
