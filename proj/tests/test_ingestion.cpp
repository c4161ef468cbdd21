#include <doctest.h>

#include <random>
#include <sstream>

#include "bcpd/changepoint.hpp"
#include "bcpd/cleaning.hpp"
#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "bcpd/ingestion.hpp"
#include "bcpd/random.hpp"
#include "bcpd/simlab.hpp"
#include "test_support.hpp"

using namespace bcpd;
using oracle::Vec;
using testing_support::to_vec;

namespace {

RawSeries hourly(std::size_t days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(5.0, 1.0);
  Vec t, v;
  for (std::size_t h = 0; h < days * 24; ++h) {
    t.push_back(1.6e9 + 3600.0 * static_cast<double>(h));
    v.push_back(normal(rng));
  }
  return RawSeries(t, v);
}

}  // namespace

TEST_CASE("ISO-8601 timestamps") {
  CHECK(parse_iso8601("1970-01-01T00:00:00Z") == 0.0);
  CHECK(parse_iso8601("2020-01-01T00:00:00Z") == 1577836800.0);
  CHECK(parse_iso8601("2020-01-01") == 1577836800.0);
  CHECK(parse_iso8601("2020-01-01T02:00:00+02:00") == 1577836800.0);
  CHECK(parse_iso8601("2019-12-31T19:00-05:00") == 1577836800.0);
  CHECK(parse_iso8601("2020-02-29T12:30:15.5Z") == doctest::Approx(1582979415.5));
  CHECK_THROWS_AS(parse_iso8601("2020-02-30"), StructuralError);
  CHECK_THROWS_AS(parse_iso8601("yesterday"), StructuralError);
}

TEST_CASE("raw series CSV") {
  std::istringstream ok("timestamp,value\n10,1.5\n20,2.5\n");
  const auto s = read_raw_series(ok, TimeFormat::epoch);
  CHECK(s.timestamps == Vec{10, 20});
  CHECK(s.values == Vec{1.5, 2.5});
  std::istringstream iso("timestamp,value\n2020-01-01T00:00:00Z,3\n2020-01-01T01:00:00Z,4\n");
  CHECK(read_raw_series(iso, TimeFormat::iso8601).timestamps == Vec{1577836800.0, 1577840400.0});

  const auto line_of = [](const std::string& text) -> std::size_t {
    std::istringstream in(text);
    try {
      read_raw_series(in, TimeFormat::epoch);
    } catch (const CsvFormatError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("time,value\n1,2\n") == 1);
  CHECK(line_of("timestamp,value\n1,2\n2,abc\n") == 3);
  CHECK(line_of("timestamp,value\n5,2\n4,2\n") == 3);
  CHECK(line_of("timestamp,value\n5\n") == 2);
  CHECK_THROWS_AS(RawSeries(Vec{1, 2}, Vec{1}), StructuralError);
}

TEST_CASE("segmentation") {
  const auto ten = segment(hourly(10, 1), 86400.0, 24);
  CHECK(ten.segments.size() == 10);
  for (const auto& s : ten.segments) CHECK(s.values.size() == 24);
  CHECK(ten.dropped.empty());

  const RawSeries short_series(Vec{0, 100, 200, 300}, Vec{1, 2, 3, 4});
  CHECK(segment(short_series, 86400.0, 4).segments.size() == 1);
  const auto too_few = segment(short_series, 86400.0, 5);
  CHECK(too_few.segments.empty());
  REQUIRE(too_few.dropped.size() == 1);
  CHECK(too_few.dropped[0].count == 4);

  // Irregular gaps: boundaries follow time, checked against a brute-force timestamp scan.
  std::mt19937_64 rng(4);
  std::exponential_distribution<double> gap(1.0 / 900.0);
  std::bernoulli_distribution long_gap(0.01);
  for (int t = 0; t < 5; ++t) {
    Vec ts{0.0}, vs{0.0};
    while (ts.size() < 3000) {
      ts.push_back(ts.back() + gap(rng) + (long_gap(rng) ? 3.0 * 86400.0 : 0.0));
      vs.push_back(static_cast<double>(ts.size()));
    }
    const auto seg = segment(RawSeries(ts, vs), 86400.0, 1);
    const auto counts = oracle::window_counts(ts, 86400.0);
    CHECK(seg.windows_total == counts.size());
    std::size_t si = 0, di = 0;
    for (std::size_t w = 0; w < counts.size(); ++w) {
      if (counts[w] >= 1) {
        REQUIRE(si < seg.segments.size());
        CHECK(seg.segments[si].window_index == w);
        CHECK(seg.segments[si].values.size() == counts[w]);
        ++si;
      } else {
        REQUIRE(di < seg.dropped.size());
        CHECK(seg.dropped[di].window_index == w);
        ++di;
      }
    }
    for (std::size_t i = 1; i < seg.segments.size(); ++i) {
      CHECK(seg.segments[i].start_time > seg.segments[i - 1].start_time);
    }
  }
  CHECK_THROWS_AS(segment(RawSeries{}, 86400.0), StructuralError);
}

TEST_CASE("support estimation and normalization") {
  const Vec v{2.0, 3.0, 4.0, 2.5};
  const auto s = estimate_support(v, 0.05);
  CHECK(s.lower == doctest::Approx(1.9));
  CHECK(s.upper == doctest::Approx(4.1));
  const auto tight = estimate_support(v, 0.0);
  CHECK(tight.lower == 2.0);
  CHECK(tight.upper == 4.0);
  CHECK_THROWS_AS(estimate_support(Vec{1, 1, 1}), DegenerateError);

  const auto n = normalize(Vec{2.0, 4.0, 3.0}, tight);
  CHECK(n.values == Vec{0.0, 1.0, 0.5});
  CHECK(n.clamped == 0);

  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> ln(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    Vec data(500);
    for (double& x : data) x = ln(rng);
    const auto sup = estimate_support(data, 0.05);
    const auto nv = normalize(data, sup);
    for (double x : nv.values) {
      CHECK(x > 0.0);
      CHECK(x < 1.0);
    }
    const auto back = denormalize(nv.values, sup);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(std::abs(back[i] - data[i]) <= 1e-12 * std::max(1.0, data[i]));
  }

  const auto clamped = normalize(Vec{0.0, 5.0, 3.0}, tight);
  CHECK(clamped.clamped == 2);
  CHECK(clamped.values == Vec{0.0, 1.0, 0.5});
}

TEST_CASE("kernel density estimate") {
  const Grid g;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec big(100000);
  for (double& x : big) x = u(rng);
  const auto k = kde(big, g);
  CHECK(oracle::sup_abs_diff(to_vec(k.density.values()), Vec(g.size(), 1.0)) < 0.05);

  Vec sym;
  std::normal_distribution<double> normal(0.5, 0.12);
  for (int i = 0; i < 300; ++i) {
    const double x = std::clamp(normal(rng), 0.0, 1.0);
    sym.push_back(x);
    sym.push_back(1.0 - x);
  }
  const auto ks = kde(sym, g);
  for (std::size_t j = 0; j < g.size(); ++j) {
    CHECK(std::abs(ks.density[j] - ks.density[g.size() - 1 - j]) < 1e-10);
  }
  CHECK(std::abs(integrate(ks.density.values(), g) - 1.0) < 1e-6);
  CHECK(*std::min_element(ks.density.values().begin(), ks.density.values().end()) >= 0.1 - 1e-12);

  // Rule-of-thumb bandwidth.
  const auto q = quartiles(sym);
  double mean = 0.0, var = 0.0;
  for (double x : sym) mean += x;
  mean /= static_cast<double>(sym.size());
  for (double x : sym) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(sym.size() - 1));
  const double expected = 1.06 * std::min(sd, q.iqr() / 1.34) * std::pow(static_cast<double>(sym.size()), -0.2);
  CHECK(silverman_bandwidth(sym) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ks.bandwidth == doctest::Approx(expected).epsilon(1e-12));

  const auto floored = kde(Vec(50, 0.3), g);
  CHECK(floored.bandwidth_floored);
  CHECK(floored.bandwidth == kMinBandwidth);
  const auto fixed = kde(sym, g, 0.07);
  CHECK(fixed.bandwidth == 0.07);
  CHECK_THROWS_AS(kde(Vec{}, g), StructuralError);
  CHECK_THROWS_AS(kde(Vec{1.5}, g), DomainError);
}

TEST_CASE("pipeline produces valid, ordered, deterministic output") {
  RawSeriesConfig cfg;
  cfg.days = 12;
  cfg.switch_day = 6;
  const auto series = gen_raw_series(cfg, 3);
  IngestionConfig ic;
  const auto a = build_sequence(series, ic);
  ic.threads = 3;
  const auto b = build_sequence(series, ic);
  REQUIRE(a.densities.size() == b.densities.size());
  for (std::size_t i = 0; i < a.densities.size(); ++i) {
    CHECK(to_vec(a.densities[i].values()) == to_vec(b.densities[i].values()));
    CHECK(std::abs(integrate(a.densities[i].values(), a.densities[i].grid()) - 1.0) < 1e-6);
  }
  CHECK(to_json(a.report).dump() == to_json(b.report).dump());
  for (std::size_t i = 1; i < a.report.window_indices.size(); ++i) {
    CHECK(a.report.window_indices[i] > a.report.window_indices[i - 1]);
  }
  CHECK(a.report.segments_total == 12);
  CHECK(a.report.bandwidth_per_segment.size() == a.densities.size());
  CHECK(a.report.scalar_outliers_removed > 0);

  const auto j = to_json(a.report);
  for (const char* key : {"segments_total", "segments_dropped", "scalar_outliers_removed", "clamped_values", "support",
                          "bandwidth_per_segment", "window_indices", "floored_bandwidths"}) {
    CHECK(j.contains(key));
  }
  CHECK_THROWS_AS(build_sequence(RawSeries{}, ic), StructuralError);
}

TEST_CASE("support reported as min/max with margin after scalar filtering") {
  RawSeriesConfig cfg;
  cfg.days = 10;
  cfg.switch_day = 10;
  cfg.spike_probability = 0.0;
  const auto series = gen_raw_series(cfg, 8);
  const auto out = build_sequence(series, IngestionConfig{});
  const auto kept = scalar_boxplot_filter(series.values, 1.5).values;
  const double lo = *std::min_element(kept.begin(), kept.end());
  const double hi = *std::max_element(kept.begin(), kept.end());
  CHECK(out.report.support.lower == doctest::Approx(lo - 0.05 * (hi - lo)).epsilon(1e-12));
  CHECK(out.report.support.upper == doctest::Approx(hi + 0.05 * (hi - lo)).epsilon(1e-12));

  IngestionConfig external;
  external.support = SupportEstimate(0.0, 2.0);
  const auto ext = build_sequence(series, external);
  CHECK(ext.report.support.lower == 0.0);
  CHECK(ext.report.support.upper == 2.0);
}

TEST_CASE("hourly series becomes one density per day") {
  RawSeriesConfig cfg;
  cfg.samples_per_day = 24;
  cfg.spike_probability = 0.0;
  IngestionConfig ic;
  ic.min_count = 20;
  const auto out = build_sequence(gen_raw_series(cfg, 1), ic);
  CHECK(out.densities.size() == 100);
  IngestionConfig strict;  // default minimum of 30 samples drops every 24-sample day
  CHECK_THROWS_AS(build_sequence(gen_raw_series(cfg, 1), strict), StructuralError);
}

TEST_CASE("end-to-end null and alternative") {
  std::size_t quiet = 0, found = 0;
  const std::size_t reps = 50;
  for (std::uint64_t s = 0; s < reps; ++s) {
    const std::uint64_t rep = derive_seed(404, s);
    DetectOptions o;
    o.seed = derive_seed(rep, 3);
    RawSeriesConfig null_cfg;
    null_cfg.switch_day = null_cfg.days;
    const auto null_seq = build_sequence(gen_raw_series(null_cfg, derive_seed(rep, 0)), IngestionConfig{}).sequence();
    quiet += !detect(null_seq, o).reject_null;

    const auto alt = build_sequence(gen_raw_series(RawSeriesConfig{}, derive_seed(rep, 1)), IngestionConfig{});
    const auto r = detect(alt.sequence(), o);
    const std::size_t day = alt.report.window_indices[r.k_hat - 1] + 1;
    found += r.reject_null && std::abs(static_cast<double>(day) - 50.0) <= 3.0;
  }
  CHECK(static_cast<double>(quiet) >= 0.9 * reps);
  CHECK(static_cast<double>(found) >= 0.9 * reps);
}
