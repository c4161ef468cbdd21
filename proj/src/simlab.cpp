#include "bcpd/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "bcpd/ingestion.hpp"
#include "bcpd/random.hpp"

namespace bcpd {
namespace {

std::vector<double> mixture(const std::vector<double>& f, const std::vector<double>& g, double w) {
  std::vector<double> out(f.size());
  for (std::size_t j = 0; j < f.size(); ++j) out[j] = w * f[j] + (1.0 - w) * g[j];
  return out;
}

// k_star == n is admitted by the generators and yields a sequence without change.
void require_change_config(std::size_t n, std::size_t k_star) {
  if (n < DistributionalSequence::kMinLength) throw StructuralError("n must be at least 4");
  if (k_star < 1 || k_star > n) throw StructuralError("k_star must satisfy 1 <= k_star <= n");
}

// Builds a sequence from per-index raw densities (already unit-integral on the grid).
DistributionalSequence finish(const Grid& grid, const std::vector<std::vector<double>>& raw) {
  std::vector<DensityFunction> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(zero_avoid(grid, r));
  return DistributionalSequence(std::move(out));
}

}  // namespace

std::string to_string(Generator g) {
  switch (g) {
    case Generator::sim1: return "sim1";
    case Generator::model1: return "model1";
    case Generator::model2: return "model2";
    case Generator::model3: return "model3";
  }
  return "sim1";
}

Generator parse_generator(std::string_view name) {
  if (name == "sim1") return Generator::sim1;
  if (name == "model1") return Generator::model1;
  if (name == "model2") return Generator::model2;
  if (name == "model3") return Generator::model3;
  throw StructuralError("unknown generator '" + std::string(name) + "'");
}

std::vector<double> beta_on_grid(const Grid& grid, double a, double b) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("Beta shape parameters must be positive");
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  const std::size_t m = grid.size();
  std::vector<double> out(m);
  for (std::size_t j = 1; j + 1 < m; ++j) {
    const double x = grid.node(j);
    out[j] = std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) + log_norm);
  }
  out[0] = out[1];
  out[m - 1] = out[m - 2];
  const double mass = integrate(out, grid);
  if (!(mass > 0.0)) throw NumericError("Beta density vanished on the grid");
  for (double& v : out) v /= mass;
  return out;
}

DistributionalSequence gen_sim1(std::size_t n, std::size_t k_star, std::uint64_t seed, const Grid& grid) {
  require_change_config(n, k_star);
  Rng rng = make_rng(seed);
  std::vector<double> a(n);
  for (double& v : a) v = uniform(rng, 14.0, 25.0);
  std::vector<double> b = a;
  std::sort(b.begin(), b.end());

  std::vector<std::vector<double>> raw(n);
  double h = HUGE_VAL;
  for (std::size_t i = 0; i < n; ++i) {
    raw[i] = beta_on_grid(grid, a[i], b[i]);
    if (i + 1 > k_star) {
      for (double& v : raw[i]) v += 0.8;
    }
    h = std::min(h, *std::min_element(raw[i].begin(), raw[i].end()));
  }
  for (auto& r : raw) {
    for (double& v : r) v = std::max(0.0, v - h);
    const double mass = integrate(r, grid);
    for (double& v : r) v /= mass;
  }
  return finish(grid, raw);
}

DistributionalSequence gen_model1(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid) {
  require_change_config(n, k_star);
  Rng rng = make_rng(seed);
  std::vector<std::vector<double>> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 <= k_star) {
      const double a = uniform(rng, 10.0, 15.0);
      const double b = uniform(rng, 10.0, 15.0);
      raw[i] = beta_on_grid(grid, a, b);
    } else {
      const double a1 = uniform(rng, 25.0, 40.0);
      const double b1 = uniform(rng, 15.0, 20.0);
      const double a2 = uniform(rng, 2.0, 4.0);
      const double b2 = uniform(rng, 4.0, 6.0);
      raw[i] = mixture(beta_on_grid(grid, a1, b1), beta_on_grid(grid, a2, b2), 0.5);
    }
  }
  return finish(grid, raw);
}

DistributionalSequence gen_model2(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid) {
  require_change_config(n, k_star);
  Rng rng = make_rng(seed);
  const double ratio = 1.0 / kModel2Mean - 1.0;
  std::vector<std::vector<double>> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i + 1 <= k_star ? uniform(rng, 15.0, 25.0) : uniform(rng, 5.0, 10.0);
    raw[i] = beta_on_grid(grid, a, ratio * a);
  }
  return finish(grid, raw);
}

DistributionalSequence gen_model3(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid) {
  require_change_config(n, k_star);
  Rng rng = make_rng(seed);
  const double q = uniform(rng, 0.005, 0.015);
  std::vector<std::vector<double>> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = uniform(rng, 15.0, 25.0);
    const double ratio = i + 1 <= k_star ? uniform(rng, 0.85, 1.0) : uniform(rng, 1.0 + q, 1.15 + q);
    raw[i] = beta_on_grid(grid, a, ratio * a);
  }
  return finish(grid, raw);
}

DistributionalSequence generate(Generator g, std::size_t n, std::size_t k_star, std::uint64_t seed,
                                const Grid& grid) {
  switch (g) {
    case Generator::sim1: return gen_sim1(n, k_star, seed, grid);
    case Generator::model1: return gen_model1(n, k_star, seed, grid);
    case Generator::model2: return gen_model2(n, k_star, seed, grid);
    case Generator::model3: return gen_model3(n, k_star, seed, grid);
  }
  throw StructuralError("unknown generator");
}

std::vector<DensityFunction> gen_outliers(std::size_t count, std::uint64_t seed, const Grid& grid) {
  Rng rng = make_rng(seed);
  std::vector<DensityFunction> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = uniform(rng, 0.0, 1.0);
    if (z > 0.7) {
      const double mu1 = uniform(rng, 0.3, 0.4);
      const double mu2 = uniform(rng, 0.6, 0.7);
      const double a1 = uniform(rng, 8.0, 14.0);
      const double a2 = uniform(rng, 15.0, 20.0);
      out.push_back(zero_avoid(grid, mixture(beta_on_grid(grid, a1, a1 / mu1 - a1),
                                             beta_on_grid(grid, a2, a2 / mu2 - a2), 0.5)));
    } else {
      const double y = uniform(rng, 0.0, 1.0);
      const double a = uniform(rng, 2.0, 5.0);
      const double b = uniform(rng, 13.0, 16.0);
      const double c = uniform(rng, 17.0, 22.0);
      const double d = uniform(rng, 2.0, 5.0);
      out.push_back(zero_avoid(grid, y > 0.5 ? beta_on_grid(grid, a, b) : beta_on_grid(grid, c, d)));
    }
  }
  return out;
}

RawSeries gen_raw_series(const RawSeriesConfig& config, std::uint64_t seed) {
  if (config.days < 1 || config.samples_per_day < 1) throw StructuralError("empty raw series config");
  Rng rng = make_rng(seed);
  const auto beta_draw = [&rng](double a, double b) {
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    return x / (x + y);
  };
  const double step = 86400.0 / static_cast<double>(config.samples_per_day);
  std::vector<double> ts, vs;
  ts.reserve(config.days * config.samples_per_day);
  vs.reserve(config.days * config.samples_per_day);
  for (std::size_t d = 0; d < config.days; ++d) {
    const bool pre = d + 1 <= config.switch_day;
    const double a = pre ? uniform(rng, 10.0, 15.0) : uniform(rng, 25.0, 40.0);
    const double b = pre ? uniform(rng, 10.0, 15.0) : uniform(rng, 15.0, 20.0);
    const double a2 = uniform(rng, 2.0, 4.0);
    const double b2 = uniform(rng, 4.0, 6.0);
    for (std::size_t s = 0; s < config.samples_per_day; ++s) {
      double x = 0.0;
      if (pre || uniform(rng, 0.0, 1.0) < 0.5) {
        x = beta_draw(a, b);
      } else {
        x = beta_draw(a2, b2);
      }
      if (uniform(rng, 0.0, 1.0) < config.spike_probability) {
        x = uniform(rng, 0.0, 1.0) < 0.5 ? -3.0 : 4.0;
      }
      ts.push_back(config.start_epoch + static_cast<double>(d) * 86400.0 + static_cast<double>(s) * step);
      vs.push_back(config.offset + config.scale * x);
    }
  }
  return RawSeries(std::move(ts), std::move(vs));
}

Contamination contaminate(const DistributionalSequence& seq, std::span<const DensityFunction> outliers,
                          std::uint64_t seed) {
  const std::size_t n = seq.size();
  if (outliers.size() > n) throw StructuralError("more outliers than sequence elements");
  Rng rng = make_rng(seed);
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i;
  // Partial Fisher-Yates: the first |outliers| entries become a uniform draw without replacement.
  for (std::size_t j = 0; j < outliers.size(); ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
    std::swap(positions[j], positions[pick(rng)]);
  }
  std::vector<DensityFunction> densities = seq.densities();
  std::vector<std::size_t> indices;
  for (std::size_t j = 0; j < outliers.size(); ++j) {
    if (!(outliers[j].grid() == seq.grid())) throw StructuralError("outlier grid mismatch");
    densities[positions[j]] = outliers[j];
    indices.push_back(positions[j] + 1);
  }
  std::sort(indices.begin(), indices.end());
  return {DistributionalSequence(std::move(densities)), std::move(indices)};
}

double scalar_mean_cusum(const DistributionalSequence& seq) {
  std::vector<double> m;
  m.reserve(seq.size());
  for (const auto& f : seq) m.push_back(first_moment(f));
  double mean = 0.0;
  for (double v : m) mean += v;
  mean /= static_cast<double>(m.size());
  double partial = 0.0;
  double best = 0.0;
  for (double v : m) {
    partial += v - mean;
    best = std::max(best, std::abs(partial));
  }
  return best / std::sqrt(static_cast<double>(m.size()));
}

void ExperimentConfig::validate() const {
  require_change_config(n, k_star);
  if (k_star == n) throw StructuralError("k_star must be below n (use no_change for null runs)");
  if (contamination_count > n) throw StructuralError("contamination_count must not exceed n");
  if (replicates < 1) throw StructuralError("replicates must be positive");
  detect.validate();
  make_detector(detector, {.whisker = detector_whisker});
  Grid{grid_nodes};
}

BoxplotStats boxplot_stats(std::span<const double> values, double whisker) {
  BoxplotStats out;
  if (values.empty()) return out;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  out.q1 = quantile_linear(sorted, 0.25);
  out.median = quantile_linear(sorted, 0.5);
  out.q3 = quantile_linear(sorted, 0.75);
  const double lo_fence = out.q1 - whisker * (out.q3 - out.q1);
  const double hi_fence = out.q3 + whisker * (out.q3 - out.q1);
  out.whisker_low = out.q1;
  out.whisker_high = out.q3;
  bool have_low = false;
  for (double v : sorted) {
    if (v < lo_fence || v > hi_fence) {
      out.fliers.push_back(v);
      continue;
    }
    if (!have_low) {
      out.whisker_low = v;
      have_low = true;
    }
    out.whisker_high = v;
  }
  return out;
}

const MethodSummary& ExperimentReport::summary(Method m) const {
  for (const auto& s : summaries) {
    if (s.method == m) return s;
  }
  throw StructuralError("no summary for method " + to_string(m));
}

MethodSummary summarize(std::span<const ReplicateRecord> records, Method method) {
  MethodSummary s;
  s.method = method;
  std::vector<double> errors;
  std::size_t rejected = 0;
  for (const auto& r : records) {
    if (r.method != method) continue;
    ++s.replicates;
    if (r.error) {
      ++s.failures;
      continue;
    }
    errors.push_back(static_cast<double>(r.abs_error));
    if (r.rejected) ++rejected;
  }
  if (s.replicates) s.rejection_rate = static_cast<double>(rejected) / static_cast<double>(s.replicates);
  s.errors = boxplot_stats(errors);
  s.median_abs_error = s.errors.median;
  return s;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Grid grid(config.grid_nodes);
  std::vector<Method> methods{Method::bayes_clr};
  if (config.compare_l2) methods.push_back(Method::l2_raw);
  const auto detector = make_detector(config.detector, {.whisker = config.detector_whisker});

  std::vector<std::vector<ReplicateRecord>> per_replicate(config.replicates);
  parallel_for(config.replicates, config.threads, [&](std::size_t r) {
    const std::uint64_t rep_seed = derive_seed(config.seed, r);
    std::vector<ReplicateRecord>& out = per_replicate[r];
    for (Method m : methods) {
      ReplicateRecord rec;
      rec.replicate = r + 1;
      rec.method = m;
      out.push_back(rec);
    }
    try {
      DistributionalSequence seq = generate(config.generator, config.n,
                                            config.no_change ? config.n : config.k_star,
                                            derive_seed(rep_seed, 0), grid);
      std::vector<std::size_t> contaminated;
      if (config.contamination_count > 0) {
        const auto outliers = gen_outliers(config.contamination_count, derive_seed(rep_seed, 1), grid);
        Contamination c = contaminate(seq, outliers, derive_seed(rep_seed, 2));
        seq = std::move(c.sequence);
        contaminated = std::move(c.indices);
      }
      DetectOptions options = config.detect;
      options.seed = derive_seed(rep_seed, 3);
      options.threads = 1;
      for (ReplicateRecord& rec : out) {
        rec.contaminated_indices = contaminated;
        try {
          DetectionResult result;
          if (config.clean) {
            CleanDetectResult cleaned = clean_and_detect(seq, options, *detector, nullptr, rec.method);
            rec.cleaned_indices = cleaned.report.removed_indices;
            result = std::move(cleaned.detection);
          } else {
            result = detect_with(rec.method, seq, options);
          }
          rec.k_hat = result.k_hat;
          rec.abs_error = result.k_hat > config.k_star ? result.k_hat - config.k_star
                                                       : config.k_star - result.k_hat;
          rec.p_value = result.p_value;
          rec.rejected = result.reject_null;
          rec.degenerate = result.degenerate;
        } catch (const std::exception& e) {
          rec.error = e.what();
        }
      }
    } catch (const std::exception& e) {
      for (ReplicateRecord& rec : out) rec.error = e.what();
    }
  });

  ExperimentReport report;
  report.config = config;
  for (auto& recs : per_replicate) {
    for (auto& rec : recs) report.records.push_back(std::move(rec));
  }
  for (Method m : methods) report.summaries.push_back(summarize(report.records, m));
  return report;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  return {{"generator", to_string(c.generator)},
          {"n", c.n},
          {"k_star", c.k_star},
          {"replicates", c.replicates},
          {"contamination_count", c.contamination_count},
          {"clean", c.clean},
          {"detector", c.detector},
          {"detector_whisker", c.detector_whisker},
          {"compare_l2", c.compare_l2},
          {"no_change", c.no_change},
          {"alpha", c.detect.alpha},
          {"mc_samples", c.detect.mc_samples},
          {"theta", c.detect.theta},
          {"bridge_nodes", c.detect.bridge_nodes},
          {"centering", to_string(c.detect.centering)},
          {"grid_nodes", c.grid_nodes},
          {"seed", c.seed}};
}

nlohmann::json to_json(const ExperimentReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) {
    nlohmann::json j{{"replicate", r.replicate},
                     {"method", to_string(r.method)},
                     {"k_hat", r.k_hat},
                     {"abs_error", r.abs_error},
                     {"p_value", r.p_value},
                     {"rejected", r.rejected},
                     {"degenerate", r.degenerate},
                     {"contaminated_indices", r.contaminated_indices},
                     {"cleaned_indices", r.cleaned_indices}};
    if (r.error) j["error"] = *r.error;
    records.push_back(std::move(j));
  }
  nlohmann::json summaries = nlohmann::json::object();
  for (const auto& s : report.summaries) {
    summaries[to_string(s.method)] = {{"replicates", s.replicates},
                                      {"failures", s.failures},
                                      {"median_abs_error", s.median_abs_error},
                                      {"rejection_rate", s.rejection_rate},
                                      {"quartiles", {s.errors.q1, s.errors.median, s.errors.q3}},
                                      {"whiskers", {s.errors.whisker_low, s.errors.whisker_high}},
                                      {"fliers", s.errors.fliers}};
  }
  return {{"config", to_json(report.config)}, {"records", records}, {"summaries", summaries}};
}

void write_records_csv(std::ostream& out, const ExperimentReport& report) {
  out << "replicate,k_hat,abs_error,p_value,rejected,method\n";
  for (const auto& r : report.records) {
    out << r.replicate << ',' << r.k_hat << ',' << r.abs_error << ',' << format_double(r.p_value) << ','
        << (r.rejected ? 1 : 0) << ',' << to_string(r.method) << '\n';
  }
}

void write_boxplot_csv(std::ostream& out, const ExperimentReport& report) {
  out << "method,q1,median,q3,whisker_low,whisker_high,fliers\n";
  for (const auto& s : report.summaries) {
    out << to_string(s.method) << ',' << format_double(s.errors.q1) << ','
        << format_double(s.errors.median) << ',' << format_double(s.errors.q3) << ','
        << format_double(s.errors.whisker_low) << ',' << format_double(s.errors.whisker_high) << ',';
    for (std::size_t i = 0; i < s.errors.fliers.size(); ++i) {
      if (i) out << ' ';
      out << format_double(s.errors.fliers[i]);
    }
    out << '\n';
  }
}

}  // namespace bcpd
