#include "bcpd/cleaning.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bcpd/errors.hpp"

namespace bcpd {

double quantile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw StructuralError("quantile of an empty sample");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Quartiles quartiles(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return {quantile_linear(sorted, 0.25), quantile_linear(sorted, 0.5), quantile_linear(sorted, 0.75)};
}

BoxplotFilterResult scalar_boxplot_filter(std::span<const double> samples, double whisker) {
  if (!(whisker > 0.0)) throw StructuralError("whisker must be positive");
  BoxplotFilterResult out;
  if (samples.size() < 4) {
    out.values.assign(samples.begin(), samples.end());
    out.kept.resize(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out.kept[i] = i;
    out.too_few_samples = true;
    return out;
  }
  const Quartiles q = quartiles(samples);
  out.lower_fence = q.q1 - whisker * q.iqr();
  out.upper_fence = q.q3 + whisker * q.iqr();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i] >= out.lower_fence && samples[i] <= out.upper_fence) {
      out.values.push_back(samples[i]);
      out.kept.push_back(i);
    } else {
      ++out.removed;
    }
  }
  return out;
}

ClrMedianDistanceDetector::ClrMedianDistanceDetector(DetectorConfig config) : config_(config) {
  if (!(config_.whisker > 0.0)) throw StructuralError("whisker must be positive");
}

nlohmann::json ClrMedianDistanceDetector::params() const {
  return {{"whisker", config_.whisker},
          {"region_lower", config_.region_lower},
          {"region_upper", config_.region_upper},
          {"mo_whisker", config_.mo_whisker},
          {"vo_whisker", config_.vo_whisker}};
}

std::vector<double> ClrMedianDistanceDetector::distances(const DistributionalSequence& seq) const {
  const Grid& grid = seq.grid();
  std::vector<ClrFunction> images;
  images.reserve(seq.size());
  for (const auto& f : seq) images.push_back(clr(f));

  std::vector<double> median(grid.size());
  std::vector<double> column(seq.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    for (std::size_t i = 0; i < seq.size(); ++i) column[i] = images[i][j];
    std::sort(column.begin(), column.end());
    median[j] = quantile_linear(column, 0.5);
  }

  std::vector<double> out(seq.size());
  std::vector<double> diff(grid.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    for (std::size_t j = 0; j < grid.size(); ++j) diff[j] = images[i][j] - median[j];
    out[i] = std::sqrt(integrate_product(diff, diff, grid));
  }
  return out;
}

std::vector<std::size_t> ClrMedianDistanceDetector::flag(const DistributionalSequence& seq) const {
  const std::vector<double> d = distances(seq);
  const Quartiles q = quartiles(d);
  const double fence = q.q3 + config_.whisker * q.iqr();
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] > fence) out.push_back(i + 1);
  }
  return out;
}

std::unique_ptr<OutlierDetector> make_detector(const std::string& name, DetectorConfig config) {
  if (name == "clr-median-distance") return std::make_unique<ClrMedianDistanceDetector>(config);
  if (name == "none") return std::make_unique<NullDetector>();
  throw StructuralError("unknown outlier detector '" + name + "'");
}

std::vector<std::size_t> detect_distributional_outliers(const DistributionalSequence& seq,
                                                        const OutlierDetector& detector) {
  std::vector<std::size_t> flagged = detector.flag(seq);
  std::sort(flagged.begin(), flagged.end());
  flagged.erase(std::unique(flagged.begin(), flagged.end()), flagged.end());
  for (std::size_t idx : flagged) {
    if (idx < 1 || idx > seq.size()) {
      throw StructuralError("detector '" + detector.name() + "' returned index out of range");
    }
  }
  return flagged;
}

std::size_t CleaningReport::original_index(std::size_t position) const {
  if (position < 1 || position > kept_indices.size()) {
    throw StructuralError("sub-sequence position out of range");
  }
  return kept_indices[position - 1];
}

CleanedSequence clean_sequence(const DistributionalSequence& seq, const OutlierDetector& primary,
                               const OutlierDetector* secondary) {
  std::vector<std::pair<std::size_t, std::string>> tagged;
  for (std::size_t idx : detect_distributional_outliers(seq, primary)) tagged.emplace_back(idx, primary.name());
  if (secondary != nullptr) {
    for (std::size_t idx : detect_distributional_outliers(seq, *secondary)) {
      const bool seen = std::any_of(tagged.begin(), tagged.end(),
                                    [idx](const auto& t) { return t.first == idx; });
      if (!seen) tagged.emplace_back(idx, secondary->name());
    }
  }
  std::sort(tagged.begin(), tagged.end());

  CleanedSequence out;
  out.report.detector = primary.name();
  out.report.params = primary.params();
  if (secondary != nullptr) {
    out.report.params["secondary"] = {{"detector", secondary->name()}, {"params", secondary->params()}};
  }
  std::size_t t = 0;
  for (std::size_t i = 1; i <= seq.size(); ++i) {
    if (t < tagged.size() && tagged[t].first == i) {
      out.report.removed_indices.push_back(i);
      out.report.detector_tags.push_back(tagged[t].second);
      ++t;
    } else {
      out.report.kept_indices.push_back(i);
      out.densities.push_back(seq[i - 1]);
    }
  }
  return out;
}

CleanDetectResult clean_and_detect(const DistributionalSequence& seq, const DetectOptions& options,
                                   const OutlierDetector& primary, const OutlierDetector* secondary,
                                   Method method) {
  CleanedSequence cleaned = clean_sequence(seq, primary, secondary);
  if (cleaned.densities.size() < DistributionalSequence::kMinLength) {
    throw StructuralError("cleaning left " + std::to_string(cleaned.densities.size()) +
                          " densities, need at least 4");
  }
  const DistributionalSequence sub(std::move(cleaned.densities));
  CleanDetectResult out{std::move(cleaned.report), detect_with(method, sub, options)};
  out.detection.k_hat = out.report.original_index(out.detection.k_hat);
  return out;
}

nlohmann::json to_json(const CleaningReport& report) {
  return {{"removed_indices", report.removed_indices},
          {"kept_indices", report.kept_indices},
          {"detector", report.detector},
          {"detector_tags", report.detector_tags},
          {"params", report.params}};
}

}  // namespace bcpd
