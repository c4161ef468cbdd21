#include "bcpd/changepoint.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "bcpd/density_csv.hpp"
#include "bcpd/errors.hpp"
#include "bcpd/random.hpp"

namespace bcpd {
namespace {

constexpr std::size_t kSamplesPerChunk = 256;

// A profile is treated as identically zero when its maximum is at rounding level relative to
// the mean squared norm of the curves themselves.
constexpr double kZeroProfileRatio = 1e-20;

Eigen::VectorXd trapezoid_weights(const Grid& grid) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t j = 0; j < grid.size(); ++j) w[static_cast<Eigen::Index>(j)] = grid.weight(j);
  return w;
}

double weighted_norm_sq(const Eigen::VectorXd& w, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return (row.array().square() * w.transpose().array()).sum();
}

double mean_curve_energy(const CurveSet& curves, const Eigen::VectorXd& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < curves.values.rows(); ++i) {
    total += weighted_norm_sq(w, curves.values.row(i));
  }
  return curves.values.rows() ? total / static_cast<double>(curves.values.rows()) : 0.0;
}

ClrFunction to_clr_function(const Grid& grid, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return ClrFunction(grid, std::vector<double>(row.data(), row.data() + row.size()));
}

}  // namespace

std::string to_string(Centering c) { return c == Centering::global ? "global" : "segmented"; }
std::string to_string(Method m) { return m == Method::bayes_clr ? "bayes-clr" : "l2-raw"; }

Centering parse_centering(std::string_view name) {
  if (name == "global") return Centering::global;
  if (name == "segmented") return Centering::segmented;
  throw StructuralError("unknown centering '" + std::string(name) + "'");
}

Method parse_method(std::string_view name) {
  if (name == "bayes-clr") return Method::bayes_clr;
  if (name == "l2-raw") return Method::l2_raw;
  throw StructuralError("unknown method '" + std::string(name) + "'");
}

CurveSet clr_curves(const DistributionalSequence& seq) {
  CurveSet out{seq.grid(), Eigen::MatrixXd(static_cast<Eigen::Index>(seq.size()),
                                           static_cast<Eigen::Index>(seq.grid().size()))};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const ClrFunction u = clr(seq[i]);
    out.values.row(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::RowVectorXd>(u.values().data(), static_cast<Eigen::Index>(u.size()));
  }
  return out;
}

CurveSet raw_curves(const DistributionalSequence& seq) {
  CurveSet out{seq.grid(), Eigen::MatrixXd(static_cast<Eigen::Index>(seq.size()),
                                           static_cast<Eigen::Index>(seq.grid().size()))};
  for (std::size_t i = 0; i < seq.size(); ++i) {
    out.values.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(
        seq[i].values().data(), static_cast<Eigen::Index>(seq[i].size()));
  }
  return out;
}

ClrFunction clr_cusum(const DistributionalSequence& seq, std::size_t k) {
  const std::size_t n = seq.size();
  if (k < 1 || k > n) throw StructuralError("CUSUM index out of range");
  const CurveSet curves = clr_curves(seq);
  const Eigen::RowVectorXd partial = curves.values.topRows(static_cast<Eigen::Index>(k)).colwise().sum();
  const Eigen::RowVectorXd total = curves.values.colwise().sum();
  const double nd = static_cast<double>(n);
  const Eigen::RowVectorXd f = (partial - (static_cast<double>(k) / nd) * total) / std::sqrt(nd);
  return to_clr_function(seq.grid(), f);
}

CusumProfile cusum_profile(const CurveSet& curves) {
  const std::size_t n = curves.size();
  if (n < 1) throw StructuralError("empty curve set");
  const Eigen::VectorXd w = trapezoid_weights(curves.grid);
  const Eigen::RowVectorXd total = curves.values.colwise().sum();
  const double nd = static_cast<double>(n);

  CusumProfile profile;
  profile.norms_sq.resize(n);
  Eigen::RowVectorXd partial = Eigen::RowVectorXd::Zero(curves.values.cols());
  for (std::size_t k = 1; k <= n; ++k) {
    partial += curves.values.row(static_cast<Eigen::Index>(k - 1));
    const Eigen::RowVectorXd diff = partial - (static_cast<double>(k) / nd) * total;
    profile.norms_sq[k - 1] = k == n ? 0.0 : weighted_norm_sq(w, diff) / nd;
  }

  const double peak = *std::max_element(profile.norms_sq.begin(), profile.norms_sq.end());
  if (peak <= kZeroProfileRatio * mean_curve_energy(curves, w)) {
    std::fill(profile.norms_sq.begin(), profile.norms_sq.end(), 0.0);
    profile.degenerate = true;
    profile.argmax_k = 1;
    return profile;
  }
  profile.argmax_k = static_cast<std::size_t>(
                         std::find(profile.norms_sq.begin(), profile.norms_sq.end(), peak) -
                         profile.norms_sq.begin()) +
                     1;
  return profile;
}

CusumProfile cusum_profile(const DistributionalSequence& seq) { return cusum_profile(clr_curves(seq)); }

std::size_t locate(const DistributionalSequence& seq) { return cusum_profile(seq).argmax_k; }

double test_statistic(const DistributionalSequence& seq) { return cusum_profile(seq).statistic(); }

Eigen::MatrixXd residual_matrix(const CurveSet& curves, Centering centering, std::size_t k_hat) {
  const auto n = static_cast<Eigen::Index>(curves.size());
  Eigen::MatrixXd out = curves.values;
  if (centering == Centering::global) {
    const Eigen::RowVectorXd mean = curves.values.colwise().mean();
    out.rowwise() -= mean;
    return out;
  }
  if (k_hat < 1 || static_cast<Eigen::Index>(k_hat) >= n) {
    throw DegenerateError("segmented centering needs 1 <= k_hat < n (k_hat = " +
                          std::to_string(k_hat) + ", n = " + std::to_string(n) + ")");
  }
  const auto k = static_cast<Eigen::Index>(k_hat);
  const Eigen::RowVectorXd pre = curves.values.topRows(k).colwise().mean();
  const Eigen::RowVectorXd post = curves.values.bottomRows(n - k).colwise().mean();
  out.topRows(k).rowwise() -= pre;
  out.bottomRows(n - k).rowwise() -= post;
  return out;
}

std::vector<ClrFunction> residuals(const DistributionalSequence& seq, Centering centering,
                                   std::size_t k_hat) {
  const CurveSet curves = clr_curves(seq);
  const Eigen::MatrixXd r = residual_matrix(curves, centering, k_hat);
  std::vector<ClrFunction> out;
  out.reserve(seq.size());
  for (Eigen::Index i = 0; i < r.rows(); ++i) out.push_back(to_clr_function(seq.grid(), r.row(i)));
  return out;
}

CovarianceEigen covariance_eigen(const Grid& grid, const Eigen::MatrixXd& residuals, double theta,
                                 EigenRoute route, double zero_trace) {
  const Eigen::Index n = residuals.rows();
  const Eigen::Index m = residuals.cols();
  if (n < 2) throw StructuralError("covariance needs at least 2 residual curves");
  if (static_cast<std::size_t>(m) != grid.size()) throw StructuralError("residual length mismatch");
  if (!(theta > 0.0 && theta <= 1.0)) throw StructuralError("theta must lie in (0, 1]");

  const Eigen::VectorXd w = trapezoid_weights(grid);
  const Eigen::VectorXd sqrt_w = w.array().sqrt();
  const double nd = static_cast<double>(n);
  // Y = R W^{1/2}; the discretized operator is W^{1/2} C W^{1/2} = Yᵀ Y / n.
  const Eigen::MatrixXd y = residuals * sqrt_w.asDiagonal();

  if (route == EigenRoute::automatic) route = n < m ? EigenRoute::gram : EigenRoute::grid;

  Eigen::VectorXd values;
  Eigen::MatrixXd functions;  // columns aligned with `values`, descending
  if (route == EigenRoute::gram) {
    const Eigen::MatrixXd gram = (y * y.transpose()) / nd;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw NumericError("eigen solver failed");
    values = solver.eigenvalues().reverse();
    const Eigen::MatrixXd v = solver.eigenvectors().rowwise().reverse();
    functions = residuals.transpose() * v;  // φ_l ∝ Rᵀ v_l, scaled below
    for (Eigen::Index l = 0; l < functions.cols(); ++l) {
      const double lambda = values[l];
      if (lambda > 0.0) functions.col(l) /= std::sqrt(nd * lambda);
    }
  } else {
    const Eigen::MatrixXd op = (y.transpose() * y) / nd;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(op);
    if (solver.info() != Eigen::Success) throw NumericError("eigen solver failed");
    values = solver.eigenvalues().reverse();
    functions = sqrt_w.cwiseInverse().asDiagonal() * solver.eigenvectors().rowwise().reverse();
  }

  CovarianceEigen out;
  out.theta = theta;
  const Eigen::Index rank_bound = std::min(n, m);
  out.eigenvalues.resize(static_cast<std::size_t>(rank_bound));
  const double top = values.size() ? std::max(values[0], 0.0) : 0.0;
  std::size_t nonzero = 0;
  for (Eigen::Index l = 0; l < rank_bound; ++l) {
    const double lambda = values[l];
    const bool keep = top > 0.0 && lambda >= kEigenClipRatio * top;
    out.eigenvalues[static_cast<std::size_t>(l)] = keep ? lambda : 0.0;
    if (keep) ++nonzero;
  }
  out.eigenfunctions = functions.leftCols(static_cast<Eigen::Index>(nonzero));

  double total = 0.0;
  for (double v : out.eigenvalues) total += v;
  if (nonzero == 0 || total <= zero_trace) {
    out.degenerate = true;
    out.L = 0;
    return out;
  }
  double running = 0.0;
  out.L = nonzero;
  for (std::size_t l = 0; l < nonzero; ++l) {
    running += out.eigenvalues[l];
    if (running / total >= theta) {
      out.L = l + 1;
      break;
    }
  }
  return out;
}

CovarianceEigen covariance_eigen(std::span<const ClrFunction> residuals, double theta) {
  if (residuals.empty()) throw StructuralError("no residuals");
  const Grid& grid = residuals.front().grid();
  Eigen::MatrixXd r(static_cast<Eigen::Index>(residuals.size()), static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (!(residuals[i].grid() == grid)) throw StructuralError("grid mismatch in residuals");
    r.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(
        residuals[i].values().data(), static_cast<Eigen::Index>(grid.size()));
  }
  return covariance_eigen(grid, r, theta);
}

std::vector<double> simulate_limit_samples(std::span<const double> eigenvalues, std::size_t M,
                                           std::size_t bridge_nodes, std::uint64_t seed,
                                           unsigned threads) {
  if (eigenvalues.empty()) throw DegenerateError("limit distribution needs L >= 1");
  if (M < 1) throw StructuralError("need at least one Monte Carlo sample");
  if (bridge_nodes < 64) throw StructuralError("bridge grid needs at least 64 nodes");

  const std::size_t steps = bridge_nodes - 1;
  const double dt = 1.0 / static_cast<double>(steps);
  const double scale = std::sqrt(dt);
  std::vector<double> t(bridge_nodes);
  for (std::size_t j = 0; j < bridge_nodes; ++j) t[j] = static_cast<double>(j) * dt;
  t.back() = 1.0;

  std::vector<double> samples(M);
  const std::size_t chunks = (M + kSamplesPerChunk - 1) / kSamplesPerChunk;
  parallel_for(chunks, threads, [&](std::size_t chunk) {
    Rng rng = make_rng(derive_seed(seed, chunk));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> walk(bridge_nodes);
    std::vector<double> acc(bridge_nodes);
    const std::size_t first = chunk * kSamplesPerChunk;
    const std::size_t last = std::min(M, first + kSamplesPerChunk);
    for (std::size_t s = first; s < last; ++s) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (double lambda : eigenvalues) {
        walk[0] = 0.0;
        for (std::size_t j = 1; j < bridge_nodes; ++j) walk[j] = walk[j - 1] + scale * normal(rng);
        const double end = walk.back();
        for (std::size_t j = 0; j < bridge_nodes; ++j) {
          const double b = walk[j] - t[j] * end;
          acc[j] += lambda * (b * b);
        }
      }
      samples[s] = *std::max_element(acc.begin(), acc.end());
    }
  });
  return samples;
}

std::vector<double> simulate_limit_samples(const CovarianceEigen& eigen, std::size_t M,
                                           std::size_t bridge_nodes, std::uint64_t seed,
                                           unsigned threads) {
  if (eigen.L == 0) throw DegenerateError("covariance operator has no retained eigenvalues");
  return simulate_limit_samples(eigen.retained(), M, bridge_nodes, seed, threads);
}

double p_value(double statistic, std::span<const double> samples) {
  if (samples.empty()) throw StructuralError("p-value needs at least one sample");
  if (!std::isfinite(statistic)) throw NumericError("non-finite test statistic");
  const auto hits = std::count_if(samples.begin(), samples.end(),
                                  [statistic](double s) { return s >= statistic; });
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

void DetectOptions::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw StructuralError("alpha must lie in (0, 1)");
  if (mc_samples < 1) throw StructuralError("mc_samples must be positive");
  if (!(theta > 0.0 && theta <= 1.0)) throw StructuralError("theta must lie in (0, 1]");
  if (bridge_nodes < 64) throw StructuralError("bridge_nodes must be at least 64");
}

DetectionResult detect_curves(const CurveSet& curves, const DetectOptions& options, Method method) {
  options.validate();
  if (curves.size() < DistributionalSequence::kMinLength) {
    throw StructuralError("detection needs at least 4 curves");
  }
  DetectionResult result;
  result.alpha = options.alpha;
  result.mc_samples = options.mc_samples;
  result.seed = options.seed;
  result.centering = options.centering;
  result.method = method;

  result.profile = cusum_profile(curves);
  result.k_hat = result.profile.argmax_k;
  result.statistic = result.profile.statistic();
  if (result.profile.degenerate) {
    result.degenerate = true;
    result.p_value = 1.0;
    return result;
  }

  const Eigen::MatrixXd resid = residual_matrix(curves, options.centering, result.k_hat);
  const Eigen::VectorXd w = trapezoid_weights(curves.grid);
  const double zero_trace = kZeroProfileRatio * mean_curve_energy(curves, w);
  const CovarianceEigen eigen =
      covariance_eigen(curves.grid, resid, options.theta, EigenRoute::automatic, zero_trace);
  result.L = eigen.L;
  result.eigenvalues.assign(eigen.retained().begin(), eigen.retained().end());
  if (eigen.degenerate) {
    result.degenerate = true;
    result.p_value = 1.0;
    return result;
  }

  std::vector<double> samples = simulate_limit_samples(eigen, options.mc_samples, options.bridge_nodes,
                                                       options.seed, options.threads);
  result.p_value = p_value(result.statistic, samples);
  result.reject_null = result.p_value < options.alpha;
  if (options.keep_limit_samples) result.limit_samples = std::move(samples);
  return result;
}

DetectionResult detect(const DistributionalSequence& seq, const DetectOptions& options) {
  DetectionResult result = detect_curves(clr_curves(seq), options, Method::bayes_clr);
  if (result.reject_null && result.k_hat < seq.size()) {
    const auto pre = seq.slice(0, result.k_hat);
    const auto post = seq.slice(result.k_hat, seq.size());
    result.increment = b_add(b_mean(post), b_smul(-1.0, b_mean(pre)));
  }
  return result;
}

DetectionResult detect_l2_raw(const DistributionalSequence& seq, const DetectOptions& options) {
  return detect_curves(raw_curves(seq), options, Method::l2_raw);
}

DetectionResult detect_with(Method method, const DistributionalSequence& seq,
                            const DetectOptions& options) {
  return method == Method::bayes_clr ? detect(seq, options) : detect_l2_raw(seq, options);
}

nlohmann::json to_json(const DetectionResult& result,
                       const std::optional<std::string>& increment_csv_path) {
  nlohmann::json j;
  j["k_hat"] = result.k_hat;
  j["statistic"] = result.statistic;
  j["p_value"] = result.p_value;
  j["alpha"] = result.alpha;
  j["reject_null"] = result.reject_null;
  j["L"] = result.L;
  j["eigenvalues"] = result.eigenvalues;
  j["mc_samples"] = result.mc_samples;
  j["seed"] = result.seed;
  j["centering"] = to_string(result.centering);
  j["degenerate"] = result.degenerate;
  j["method"] = to_string(result.method);
  if (increment_csv_path) j["increment_csv_path"] = *increment_csv_path;
  return j;
}

void write_profile_csv(std::ostream& out, const CusumProfile& profile) {
  out << "k,norm_sq\n";
  for (std::size_t k = 1; k <= profile.size(); ++k) {
    out << k << ',' << format_double(profile.norms_sq[k - 1]) << '\n';
  }
}

}  // namespace bcpd
