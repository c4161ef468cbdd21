#include "bcpd/ingestion.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numbers>

#include "bcpd/cleaning.hpp"
#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "bcpd/random.hpp"

namespace bcpd {
namespace {

// Kernel contributions beyond this many bandwidths are below 1e-13 of the peak.
constexpr double kKernelCutoff = 8.0;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_number(const std::string& field, std::size_t line_no, const char* what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != field.size() || !std::isfinite(v)) {
    throw CsvFormatError(line_no, std::string("invalid ") + what + " '" + field + "'");
  }
  return v;
}

}  // namespace

RawSeries::RawSeries(std::vector<double> ts, std::vector<double> vs)
    : timestamps(std::move(ts)), values(std::move(vs)) {
  if (timestamps.size() != values.size()) throw StructuralError("timestamps and values differ in length");
  if (!std::is_sorted(timestamps.begin(), timestamps.end())) {
    throw StructuralError("timestamps must be non-decreasing");
  }
}

double parse_iso8601(const std::string& text) {
  int year = 0;
  unsigned month = 0, day = 0;
  int consumed = 0;
  if (std::sscanf(text.c_str(), "%4d-%2u-%2u%n", &year, &month, &day, &consumed) != 3 || consumed != 10) {
    throw StructuralError("invalid ISO-8601 date '" + text + "'");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                        std::chrono::day{day}};
  if (!ymd.ok()) throw StructuralError("invalid calendar date '" + text + "'");
  double seconds =
      static_cast<double>(std::chrono::sys_days{ymd}.time_since_epoch().count()) * 86400.0;

  std::string rest = text.substr(10);
  if (rest.empty()) return seconds;
  if (rest[0] != 'T' && rest[0] != ' ') throw StructuralError("invalid ISO-8601 time '" + text + "'");
  unsigned hh = 0, mm = 0;
  double ss = 0.0;
  int n = 0;
  if (std::sscanf(rest.c_str() + 1, "%2u:%2u%n", &hh, &mm, &n) != 2 || n != 5) {
    throw StructuralError("invalid ISO-8601 time '" + text + "'");
  }
  std::size_t pos = 1 + 5;
  if (pos < rest.size() && rest[pos] == ':') {
    std::size_t end = pos + 1;
    while (end < rest.size() && (std::isdigit(static_cast<unsigned char>(rest[end])) || rest[end] == '.')) ++end;
    ss = std::stod(rest.substr(pos + 1, end - pos - 1));
    pos = end;
  }
  if (hh > 23 || mm > 59 || ss >= 61.0) throw StructuralError("invalid ISO-8601 time '" + text + "'");
  seconds += hh * 3600.0 + mm * 60.0 + ss;
  const std::string zone = rest.substr(pos);
  if (zone.empty() || zone == "Z") return seconds;
  unsigned zh = 0, zm = 0;
  if ((zone[0] == '+' || zone[0] == '-') && std::sscanf(zone.c_str() + 1, "%2u:%2u", &zh, &zm) == 2) {
    const double offset = zh * 3600.0 + zm * 60.0;
    return zone[0] == '+' ? seconds - offset : seconds + offset;
  }
  throw StructuralError("invalid ISO-8601 zone '" + text + "'");
}

RawSeries read_raw_series(std::istream& in, TimeFormat format) {
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  std::vector<double> ts, vs;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      std::string compact;
      for (char c : line) {
        if (!std::isspace(static_cast<unsigned char>(c))) compact += c;
      }
      if (compact != "timestamp,value") throw CsvFormatError(line_no, "expected header 'timestamp,value'");
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos) {
      throw CsvFormatError(line_no, "expected two fields");
    }
    const std::string t = trim(line.substr(0, comma));
    const std::string v = trim(line.substr(comma + 1));
    if (format == TimeFormat::epoch) {
      ts.push_back(parse_number(t, line_no, "timestamp"));
    } else {
      try {
        ts.push_back(parse_iso8601(t));
      } catch (const StructuralError& e) {
        throw CsvFormatError(line_no, e.what());
      }
    }
    vs.push_back(parse_number(v, line_no, "value"));
    if (ts.size() > 1 && ts.back() < ts[ts.size() - 2]) {
      throw CsvFormatError(line_no, "timestamps must be non-decreasing");
    }
  }
  if (!header) throw CsvFormatError(1, "missing header");
  return RawSeries(std::move(ts), std::move(vs));
}

RawSeries read_raw_series_file(const std::string& path, TimeFormat format) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  return read_raw_series(in, format);
}

Segmentation segment(const RawSeries& series, double window, std::size_t min_count) {
  if (!(window > 0.0)) throw StructuralError("window must be positive");
  if (series.size() == 0) throw StructuralError("empty series");
  const double t0 = series.timestamps.front();
  Segmentation out;
  out.windows_total =
      static_cast<std::size_t>(std::floor((series.timestamps.back() - t0) / window)) + 1;
  std::size_t i = 0;
  for (std::size_t w = 0; w < out.windows_total; ++w) {
    const double start = t0 + static_cast<double>(w) * window;
    Segment seg{w, start, {}};
    while (i < series.size() &&
           static_cast<std::size_t>(std::floor((series.timestamps[i] - t0) / window)) == w) {
      seg.values.push_back(series.values[i]);
      ++i;
    }
    if (seg.values.size() < min_count) {
      out.dropped.push_back({w, seg.values.size()});
    } else {
      out.segments.push_back(std::move(seg));
    }
  }
  return out;
}

SupportEstimate::SupportEstimate(double lo, double hi, double margin)
    : lower(lo), upper(hi), margin_fraction(margin) {
  if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper)) {
    throw DegenerateError("support needs lower < upper");
  }
}

SupportEstimate estimate_support(std::span<const double> values, double margin_fraction) {
  if (!(margin_fraction >= 0.0)) throw StructuralError("margin fraction must be non-negative");
  if (values.empty()) throw DegenerateError("support of an empty sample");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) throw DegenerateError("all values equal; support is degenerate");
  return SupportEstimate(*lo - margin_fraction * range, *hi + margin_fraction * range, margin_fraction);
}

NormalizedValues normalize(std::span<const double> values, const SupportEstimate& support) {
  if (!(support.lower < support.upper)) throw DegenerateError("degenerate support");
  NormalizedValues out;
  out.values.reserve(values.size());
  const double width = support.width();
  for (double v : values) {
    double u = (v - support.lower) / width;
    if (u < 0.0 || u > 1.0) {
      ++out.clamped;
      u = std::clamp(u, 0.0, 1.0);
    }
    out.values.push_back(u);
  }
  return out;
}

std::vector<double> denormalize(std::span<const double> values, const SupportEstimate& support) {
  std::vector<double> out;
  out.reserve(values.size());
  for (double u : values) out.push_back(support.lower + u * support.width());
  return out;
}

double silverman_bandwidth(std::span<const double> samples) {
  const std::size_t n = samples.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sigma = std::sqrt(ss / static_cast<double>(n - 1));
  const double iqr = quartiles(samples).iqr();
  const double spread = iqr > 0.0 ? std::min(sigma, iqr / 1.34) : sigma;
  return 1.06 * spread * std::pow(static_cast<double>(n), -0.2);
}

KdeResult kde(std::span<const double> samples, const Grid& grid, std::optional<double> bandwidth) {
  if (samples.empty()) throw StructuralError("KDE needs at least one sample");
  for (double v : samples) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("KDE samples must lie in [0,1]");
  }
  double h = bandwidth ? *bandwidth : silverman_bandwidth(samples);
  bool floored = false;
  if (!(h >= kMinBandwidth)) {
    h = kMinBandwidth;
    floored = true;
  }

  // Reflection about both boundaries: the sample set is augmented with −X and 2 − X.
  std::vector<double> points;
  points.reserve(3 * samples.size());
  for (double v : samples) {
    points.push_back(v);
    points.push_back(-v);
    points.push_back(2.0 - v);
  }
  std::sort(points.begin(), points.end());

  const double reach = kKernelCutoff * h;
  const double norm = 1.0 / (static_cast<double>(samples.size()) * h * std::sqrt(2.0 * std::numbers::pi));
  std::vector<double> values(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const double x = grid.node(j);
    auto it = std::lower_bound(points.begin(), points.end(), x - reach);
    const auto stop = std::upper_bound(it, points.end(), x + reach);
    double acc = 0.0;
    for (; it != stop; ++it) {
      const double z = (x - *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
    values[j] = acc * norm;
  }
  const double mass = integrate(values, grid);
  if (!(mass > 0.0)) throw NumericError("KDE mass vanished on the grid");
  for (double& v : values) v /= mass;
  return {zero_avoid(grid, values), h, floored};
}

IngestionOutput build_sequence(const RawSeries& series, const IngestionConfig& config) {
  if (series.size() == 0) throw StructuralError("empty series");
  const Grid grid(config.grid_nodes);

  const BoxplotFilterResult filtered = scalar_boxplot_filter(series.values, config.whisker);
  std::vector<double> ts;
  ts.reserve(filtered.kept.size());
  for (std::size_t i : filtered.kept) ts.push_back(series.timestamps[i]);

  IngestionOutput out{{}, {}};
  IngestionReport& report = out.report;
  report.scalar_outliers_removed = filtered.removed;
  report.support = config.support ? *config.support : estimate_support(filtered.values, config.margin);

  NormalizedValues normalized = normalize(filtered.values, report.support);
  report.clamped_values = normalized.clamped;

  const Segmentation segs =
      segment(RawSeries(std::move(ts), std::move(normalized.values)), config.window, config.min_count);
  report.segments_total = segs.windows_total;
  report.segments_dropped = segs.dropped;
  if (segs.segments.size() < DistributionalSequence::kMinLength) {
    throw StructuralError("only " + std::to_string(segs.segments.size()) +
                          " segments retained, need at least 4");
  }

  std::vector<std::optional<KdeResult>> estimates(segs.segments.size());
  parallel_for(segs.segments.size(), config.threads, [&](std::size_t s) {
    estimates[s] = kde(segs.segments[s].values, grid, config.bandwidth);
  });
  for (std::size_t s = 0; s < estimates.size(); ++s) {
    out.densities.push_back(estimates[s]->density);
    report.bandwidth_per_segment.push_back(estimates[s]->bandwidth);
    report.window_indices.push_back(segs.segments[s].window_index);
    if (estimates[s]->bandwidth_floored) ++report.floored_bandwidths;
  }
  return out;
}

nlohmann::json to_json(const IngestionReport& report) {
  nlohmann::json dropped = nlohmann::json::array();
  for (const auto& d : report.segments_dropped) {
    dropped.push_back({{"window_index", d.window_index}, {"count", d.count}});
  }
  return {{"segments_total", report.segments_total},
          {"segments_dropped", dropped},
          {"scalar_outliers_removed", report.scalar_outliers_removed},
          {"clamped_values", report.clamped_values},
          {"support",
           {{"lower", report.support.lower},
            {"upper", report.support.upper},
            {"margin_fraction", report.support.margin_fraction}}},
          {"bandwidth_per_segment", report.bandwidth_per_segment},
          {"window_indices", report.window_indices},
          {"floored_bandwidths", report.floored_bandwidths}};
}

}  // namespace bcpd
