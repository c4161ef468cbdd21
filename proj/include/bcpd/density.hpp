#pragma once

// Grid-sampled densities on [0,1], Bayes-space algebra and the clr isomorphism.

#include <cstddef>
#include <span>
#include <vector>

namespace bcpd {

/// Uniform partition of [0,1] including both endpoints.
class Grid {
public:
  static constexpr std::size_t kMinNodes = 16;
  static constexpr std::size_t kDefaultNodes = 512;

  explicit Grid(std::size_t node_count = kDefaultNodes);

  std::size_t size() const noexcept { return node_count_; }
  double spacing() const noexcept { return spacing_; }
  double node(std::size_t j) const noexcept {
    return j + 1 == node_count_ ? 1.0 : static_cast<double>(j) * spacing_;
  }
  std::vector<double> nodes() const;

  /// Trapezoid weight of node j.
  double weight(std::size_t j) const noexcept {
    return (j == 0 || j + 1 == node_count_) ? 0.5 * spacing_ : spacing_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

private:
  std::size_t node_count_;
  double spacing_;
};

/// Trapezoid-rule integral over [0,1].
double integrate(std::span<const double> values, const Grid& grid);

/// Trapezoid-rule integral of the pointwise product of two sampled functions.
double integrate_product(std::span<const double> a, std::span<const double> b, const Grid& grid);

/// Positive, unit-integral function sampled on a grid.
class DensityFunction {
public:
  static constexpr double kIntegralTolerance = 1e-6;

  /// Validates positivity and unit integral (within kIntegralTolerance).
  DensityFunction(Grid grid, std::vector<double> values);

  /// Rescales strictly positive values to an exact unit integral.
  static DensityFunction normalized(Grid grid, std::vector<double> values);

  /// Constant 1 on [0,1]; the neutral element of the Bayes space.
  static DensityFunction uniform(Grid grid);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t j) const noexcept { return values_[j]; }
  std::size_t size() const noexcept { return values_.size(); }

private:
  struct Unchecked {};
  DensityFunction(Unchecked, Grid grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {}

  Grid grid_;
  std::vector<double> values_;
};

/// Zero-integral function on a grid (image of the clr transform).
class ClrFunction {
public:
  static constexpr double kIntegralTolerance = 1e-6;

  ClrFunction(Grid grid, std::vector<double> values);

  static ClrFunction zero(Grid grid);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t j) const noexcept { return values_[j]; }
  std::size_t size() const noexcept { return values_.size(); }

private:
  Grid grid_;
  std::vector<double> values_;
};

/// Time-ordered densities sharing one grid.
class DistributionalSequence {
public:
  static constexpr std::size_t kMinLength = 4;

  explicit DistributionalSequence(std::vector<DensityFunction> densities);

  const Grid& grid() const noexcept { return densities_.front().grid(); }
  std::size_t size() const noexcept { return densities_.size(); }
  const DensityFunction& operator[](std::size_t i) const noexcept { return densities_[i]; }
  const std::vector<DensityFunction>& densities() const noexcept { return densities_; }
  auto begin() const noexcept { return densities_.begin(); }
  auto end() const noexcept { return densities_.end(); }

  DistributionalSequence reversed() const;

  /// Elements [first, last) as a sequence; the length floor is not enforced here.
  std::vector<DensityFunction> slice(std::size_t first, std::size_t last) const;

private:
  std::vector<DensityFunction> densities_;
};

/// 0.9 f + 0.1. Accepts non-negative values integrating to one.
DensityFunction zero_avoid(const Grid& grid, std::span<const double> values);
DensityFunction zero_avoid(const DensityFunction& f);

/// Perturbation: f g / ∫ f g.
DensityFunction b_add(const DensityFunction& f, const DensityFunction& g);

/// Powering: f^c / ∫ f^c.
DensityFunction b_smul(double c, const DensityFunction& f);

/// Bayes-space sample mean (1/n) ⊙ (⊕ fᵢ), evaluated in the clr domain.
DensityFunction b_mean(std::span<const DensityFunction> densities);
DensityFunction b_mean(const DistributionalSequence& seq);

ClrFunction clr(const DensityFunction& f);
DensityFunction clr_inv(const ClrFunction& u);

/// Renormalized exp of arbitrary finite values; the zero-integral check is skipped.
DensityFunction clr_inv(const Grid& grid, std::span<const double> values);

double b_inner(const DensityFunction& f, const DensityFunction& g);
double b_norm(const DensityFunction& f);
double b_distance(const DensityFunction& f, const DensityFunction& g);

/// ∫ x f(x) dx.
double first_moment(const DensityFunction& f);

/// max_j |a_j - b_j|.
double sup_distance(std::span<const double> a, std::span<const double> b);

}  // namespace bcpd
