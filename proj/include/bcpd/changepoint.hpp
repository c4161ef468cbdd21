#pragma once

// Functional CUSUM change-point detection for distributional sequences.
//
// The Bayes-space statistic is evaluated through the clr isomorphism: every density is mapped to
// its clr image, the CUSUM profile and residual covariance are computed on those curves, and
// significance comes from Monte Carlo draws of sup_x Σ λ_l B_l(x)², B_l independent Brownian
// bridges. The competing "l2-raw" detector runs the same pipeline on the raw density values.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bcpd/density.hpp"

namespace bcpd {

enum class Centering { global, segmented };
enum class Method { bayes_clr, l2_raw };

std::string to_string(Centering c);
std::string to_string(Method m);
Centering parse_centering(std::string_view name);
Method parse_method(std::string_view name);

/// Functional observations on a common grid, one row per time index.
struct CurveSet {
  Grid grid;
  Eigen::MatrixXd values;  // n x node_count

  std::size_t size() const noexcept { return static_cast<std::size_t>(values.rows()); }
};

CurveSet clr_curves(const DistributionalSequence& seq);
CurveSet raw_curves(const DistributionalSequence& seq);

struct CusumProfile {
  std::vector<double> norms_sq;  // index k-1 holds the squared norm at k = 1..n
  std::size_t argmax_k = 1;      // smallest maximizing k
  bool degenerate = false;       // profile identically zero

  double statistic() const noexcept { return norms_sq.empty() ? 0.0 : norms_sq[argmax_k - 1]; }
  std::size_t size() const noexcept { return norms_sq.size(); }
};

/// clr image of the CUSUM functional at 1 <= k <= n.
ClrFunction clr_cusum(const DistributionalSequence& seq, std::size_t k);

CusumProfile cusum_profile(const CurveSet& curves);
CusumProfile cusum_profile(const DistributionalSequence& seq);

std::size_t locate(const DistributionalSequence& seq);
double test_statistic(const DistributionalSequence& seq);

/// Rows are the centred curves. Segmented centering needs 1 <= k_hat < n.
Eigen::MatrixXd residual_matrix(const CurveSet& curves, Centering centering, std::size_t k_hat);
std::vector<ClrFunction> residuals(const DistributionalSequence& seq, Centering centering,
                                   std::size_t k_hat);

struct CovarianceEigen {
  std::vector<double> eigenvalues;  // descending, clipped at zero
  Eigen::MatrixXd eigenfunctions;   // node_count x (number of nonzero eigenvalues)
  std::size_t L = 0;
  double theta = 0.95;
  bool degenerate = false;

  std::span<const double> retained() const noexcept { return {eigenvalues.data(), L}; }
};

/// Which discretized eigenproblem to solve. Both give the same nonzero spectrum; `gram` works
/// with the n x n residual Gram matrix and is chosen automatically when n < node_count.
enum class EigenRoute { automatic, grid, gram };

/// Eigenvalues below this fraction of the largest are set to zero.
inline constexpr double kEigenClipRatio = 1e-12;

CovarianceEigen covariance_eigen(const Grid& grid, const Eigen::MatrixXd& residuals, double theta,
                                 EigenRoute route = EigenRoute::automatic, double zero_trace = 0.0);
CovarianceEigen covariance_eigen(std::span<const ClrFunction> residuals, double theta);

/// M draws of sup_x Σ_l λ_l B_l(x)² with each bridge sampled on `bridge_nodes` points.
/// Draws are produced in fixed-size chunks seeded by derive_seed(seed, chunk), so the output does
/// not depend on `threads`.
std::vector<double> simulate_limit_samples(std::span<const double> eigenvalues, std::size_t M,
                                           std::size_t bridge_nodes, std::uint64_t seed,
                                           unsigned threads = 1);
std::vector<double> simulate_limit_samples(const CovarianceEigen& eigen, std::size_t M,
                                           std::size_t bridge_nodes, std::uint64_t seed,
                                           unsigned threads = 1);

/// Fraction of samples at or above the statistic.
double p_value(double statistic, std::span<const double> samples);

struct DetectOptions {
  double alpha = 0.05;
  std::size_t mc_samples = 2000;
  double theta = 0.95;
  std::uint64_t seed = 1;
  std::size_t bridge_nodes = 1001;
  Centering centering = Centering::global;
  unsigned threads = 1;
  bool keep_limit_samples = false;

  void validate() const;
};

struct DetectionResult {
  std::size_t k_hat = 1;
  double statistic = 0.0;
  double p_value = 1.0;
  double alpha = 0.05;
  bool reject_null = false;
  std::size_t L = 0;
  std::vector<double> eigenvalues;  // retained (first L)
  std::size_t mc_samples = 0;
  std::uint64_t seed = 0;
  Centering centering = Centering::global;
  bool degenerate = false;
  Method method = Method::bayes_clr;
  CusumProfile profile;
  std::vector<double> limit_samples;  // filled when DetectOptions::keep_limit_samples
  std::optional<DensityFunction> increment;
};

/// Runs profile, localization, residual covariance, Monte Carlo and the decision on prepared curves.
DetectionResult detect_curves(const CurveSet& curves, const DetectOptions& options,
                              Method method = Method::bayes_clr);

/// Bayes-space detector. When the null is rejected the estimated increment
/// mean(post) ⊕ (-1) ⊙ mean(pre) is attached.
DetectionResult detect(const DistributionalSequence& seq, const DetectOptions& options);

/// Competing detector treating the densities as ordinary L² functions.
DetectionResult detect_l2_raw(const DistributionalSequence& seq, const DetectOptions& options);

DetectionResult detect_with(Method method, const DistributionalSequence& seq,
                            const DetectOptions& options);

nlohmann::json to_json(const DetectionResult& result,
                       const std::optional<std::string>& increment_csv_path = std::nullopt);

/// Two columns: k, norm_sq.
void write_profile_csv(std::ostream& out, const CusumProfile& profile);

}  // namespace bcpd
