#pragma once

// Synthetic distributional sequences, outlier injection and the repeated-experiment harness.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bcpd/changepoint.hpp"
#include "bcpd/cleaning.hpp"
#include "bcpd/density.hpp"

namespace bcpd {

enum class Generator { sim1, model1, model2, model3 };

std::string to_string(Generator g);
Generator parse_generator(std::string_view name);

/// Beta(a, b) density on the grid. Endpoints copy the adjacent interior node; the result is
/// rescaled to a unit trapezoid integral.
std::vector<double> beta_on_grid(const Grid& grid, double a, double b);

/// Mean ratio of the Model II family: every underlying Beta variable has this expectation.
inline constexpr double kModel2Mean = 0.45;

/// Beta(a_i, b_i) + 0.8 after the change, b = sorted a, shifted by the global minimum and
/// renormalized.
DistributionalSequence gen_sim1(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                const Grid& grid = Grid());
/// Unimodal Beta before, two-component Beta mixture after.
DistributionalSequence gen_model1(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid = Grid());
/// Same expectation 0.45 throughout, concentration drops after the change.
DistributionalSequence gen_model2(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid = Grid());
/// Mild change: the shape ratio b/a moves from [0.85, 1] to [1 + q, 1.15 + q].
DistributionalSequence gen_model3(std::size_t n, std::size_t k_star, std::uint64_t seed,
                                  const Grid& grid = Grid());

/// Generators accept 1 <= k_star <= n; k_star == n produces pre-change data only.
DistributionalSequence generate(Generator g, std::size_t n, std::size_t k_star, std::uint64_t seed,
                                const Grid& grid = Grid());

/// Bimodal mixtures (probability 0.3) or strongly skewed Betas (0.7).
std::vector<DensityFunction> gen_outliers(std::size_t count, std::uint64_t seed,
                                          const Grid& grid = Grid());

struct RawSeriesConfig {
  std::size_t days = 100;
  std::size_t samples_per_day = 144;
  std::size_t switch_day = 50;    // last day drawn from the pre-change law; == days for no switch
  double spike_probability = 0.005;
  double offset = 0.9;            // physical value = offset + scale · x, x in [0,1]
  double scale = 0.2;
  double start_epoch = 1.2e9;
};

/// Regularly sampled scalar series. Each day draws its own Beta(U(10,15), U(10,15)) law before the
/// switch and a 0.5·Beta(U(25,40), U(15,20)) + 0.5·Beta(U(2,4), U(4,6)) mixture after it; isolated
/// spikes far outside the support are injected with the given probability.
struct RawSeries;
RawSeries gen_raw_series(const RawSeriesConfig& config, std::uint64_t seed);

struct Contamination {
  DistributionalSequence sequence;
  std::vector<std::size_t> indices;  // replaced positions, 1-based ascending
};

/// Replaces uniformly chosen distinct positions; outliers[j] lands on the j-th drawn position.
Contamination contaminate(const DistributionalSequence& seq, std::span<const DensityFunction> outliers,
                          std::uint64_t seed);

/// max_k |Σ_{i≤k} (m_i − m̄)| / √n over the first moments m_i = ∫ x f_i(x) dx.
double scalar_mean_cusum(const DistributionalSequence& seq);

struct ExperimentConfig {
  Generator generator = Generator::sim1;
  std::size_t n = 100;
  std::size_t k_star = 50;
  std::size_t replicates = 50;
  std::size_t contamination_count = 0;
  bool clean = false;
  std::string detector = "clr-median-distance";
  double detector_whisker = kDefaultDetectorWhisker;
  bool compare_l2 = false;
  bool no_change = false;  // generate pre-change data only; abs_error still measured against k_star
  DetectOptions detect;
  std::size_t grid_nodes = Grid::kDefaultNodes;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const;
};

struct ReplicateRecord {
  std::size_t replicate = 0;
  Method method = Method::bayes_clr;
  std::size_t k_hat = 0;
  std::size_t abs_error = 0;
  double p_value = 1.0;
  bool rejected = false;
  bool degenerate = false;
  std::vector<std::size_t> contaminated_indices;
  std::vector<std::size_t> cleaned_indices;
  std::optional<std::string> error;
};

struct BoxplotStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> fliers;
};

/// Quartiles, whisker ends at the most extreme data inside the 1.5·IQR fences, and fliers.
BoxplotStats boxplot_stats(std::span<const double> values, double whisker = kDefaultWhisker);

struct MethodSummary {
  Method method = Method::bayes_clr;
  std::size_t replicates = 0;
  std::size_t failures = 0;
  double median_abs_error = 0.0;
  double rejection_rate = 0.0;
  BoxplotStats errors;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicateRecord> records;  // replicate order, then method order
  std::vector<MethodSummary> summaries;

  const MethodSummary& summary(Method m) const;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

/// Aggregates for one method recomputed from the records.
MethodSummary summarize(std::span<const ReplicateRecord> records, Method method);

nlohmann::json to_json(const ExperimentConfig& config);
nlohmann::json to_json(const ExperimentReport& report);

/// Columns: replicate, k_hat, abs_error, p_value, rejected, method.
void write_records_csv(std::ostream& out, const ExperimentReport& report);

/// Columns: method, q1, median, q3, whisker_low, whisker_high, fliers (space separated).
void write_boxplot_csv(std::ostream& out, const ExperimentReport& report);

}  // namespace bcpd
