#include "bcpd/density.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bcpd/errors.hpp"

namespace bcpd {
namespace {

void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) {
    throw StructuralError("grid mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + " nodes");
  }
}

void require_length(std::size_t got, const Grid& grid) {
  if (got != grid.size()) {
    throw StructuralError("expected " + std::to_string(grid.size()) + " values, got " +
                          std::to_string(got));
  }
}

// Normalizes exp(logs) to unit integral, shifting by the maximum to keep exp in range.
std::vector<double> exp_normalized(const Grid& grid, std::vector<double> logs) {
  double peak = -HUGE_VAL;
  for (double v : logs) {
    if (!std::isfinite(v)) throw NumericError("non-finite log-density value");
    peak = std::max(peak, v);
  }
  for (double& v : logs) {
    v = std::exp(v - peak);
    if (!(v > 0.0)) throw NumericError("density value underflows to zero");
  }
  const double mass = integrate(logs, grid);
  if (!(mass > 1e-300) || !std::isfinite(mass)) {
    throw NumericError("normalizing integral out of range");
  }
  for (double& v : logs) v /= mass;
  return logs;
}

}  // namespace

Grid::Grid(std::size_t node_count) : node_count_(node_count), spacing_(0.0) {
  if (node_count < kMinNodes) {
    throw StructuralError("grid needs at least " + std::to_string(kMinNodes) + " nodes, got " +
                          std::to_string(node_count));
  }
  spacing_ = 1.0 / static_cast<double>(node_count - 1);
}

std::vector<double> Grid::nodes() const {
  std::vector<double> x(node_count_);
  for (std::size_t j = 0; j < node_count_; ++j) x[j] = node(j);
  return x;
}

double integrate(std::span<const double> values, const Grid& grid) {
  require_length(values.size(), grid);
  double inner = 0.0;
  for (std::size_t j = 1; j + 1 < values.size(); ++j) {
    if (!std::isfinite(values[j])) throw NumericError("non-finite value in integrand");
    inner += values[j];
  }
  const double ends = values.front() + values.back();
  if (!std::isfinite(ends)) throw NumericError("non-finite value in integrand");
  return grid.spacing() * (inner + 0.5 * ends);
}

double integrate_product(std::span<const double> a, std::span<const double> b, const Grid& grid) {
  require_length(a.size(), grid);
  require_length(b.size(), grid);
  double inner = 0.0;
  for (std::size_t j = 1; j + 1 < a.size(); ++j) inner += a[j] * b[j];
  const double ends = a.front() * b.front() + a.back() * b.back();
  const double total = grid.spacing() * (inner + 0.5 * ends);
  if (!std::isfinite(total)) throw NumericError("non-finite value in integrand");
  return total;
}

DensityFunction::DensityFunction(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  require_length(values_.size(), grid_);
  for (std::size_t j = 0; j < values_.size(); ++j) {
    if (!std::isfinite(values_[j])) throw NumericError("non-finite density value");
    if (!(values_[j] > 0.0)) {
      throw DomainError("density value at node " + std::to_string(j) +
                        " is not strictly positive (apply zero_avoid first)");
    }
  }
  const double mass = integrate(values_, grid_);
  if (std::abs(mass - 1.0) > kIntegralTolerance) {
    throw DomainError("density integrates to " + std::to_string(mass) + ", expected 1");
  }
}

DensityFunction DensityFunction::normalized(Grid grid, std::vector<double> values) {
  require_length(values.size(), grid);
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite density value");
    if (!(v > 0.0)) throw DomainError("density values must be strictly positive");
  }
  const double mass = integrate(values, grid);
  if (!(mass > 1e-300) || !std::isfinite(mass)) {
    throw NumericError("normalizing integral out of range");
  }
  for (double& v : values) v /= mass;
  return DensityFunction(Unchecked{}, grid, std::move(values));
}

DensityFunction DensityFunction::uniform(Grid grid) {
  return DensityFunction(Unchecked{}, grid, std::vector<double>(grid.size(), 1.0));
}

ClrFunction::ClrFunction(Grid grid, std::vector<double> values)
    : grid_(grid), values_(std::move(values)) {
  const double total = integrate(values_, grid_);
  if (std::abs(total) > kIntegralTolerance) {
    throw DomainError("clr function integrates to " + std::to_string(total) + ", expected 0");
  }
}

ClrFunction ClrFunction::zero(Grid grid) {
  return ClrFunction(grid, std::vector<double>(grid.size(), 0.0));
}

DistributionalSequence::DistributionalSequence(std::vector<DensityFunction> densities)
    : densities_(std::move(densities)) {
  if (densities_.size() < kMinLength) {
    throw StructuralError("a distributional sequence needs at least " +
                          std::to_string(kMinLength) + " densities, got " +
                          std::to_string(densities_.size()));
  }
  for (const auto& f : densities_) require_same_grid(f.grid(), densities_.front().grid());
}

DistributionalSequence DistributionalSequence::reversed() const {
  return DistributionalSequence(std::vector<DensityFunction>(densities_.rbegin(), densities_.rend()));
}

std::vector<DensityFunction> DistributionalSequence::slice(std::size_t first, std::size_t last) const {
  if (first > last || last > densities_.size()) throw StructuralError("slice out of range");
  return {densities_.begin() + static_cast<std::ptrdiff_t>(first),
          densities_.begin() + static_cast<std::ptrdiff_t>(last)};
}

DensityFunction zero_avoid(const Grid& grid, std::span<const double> values) {
  require_length(values.size(), grid);
  std::vector<double> out(values.size());
  for (std::size_t j = 0; j < values.size(); ++j) {
    if (!std::isfinite(values[j])) throw NumericError("non-finite density value");
    if (values[j] < 0.0) throw DomainError("density values must be non-negative");
    out[j] = 0.9 * values[j] + 0.1;
  }
  const double mass = integrate(values, grid);
  if (std::abs(mass - 1.0) > DensityFunction::kIntegralTolerance) {
    throw DomainError("density integrates to " + std::to_string(mass) + ", expected 1");
  }
  return DensityFunction::normalized(grid, std::move(out));
}

DensityFunction zero_avoid(const DensityFunction& f) { return zero_avoid(f.grid(), f.values()); }

DensityFunction b_add(const DensityFunction& f, const DensityFunction& g) {
  require_same_grid(f.grid(), g.grid());
  std::vector<double> prod(f.size());
  for (std::size_t j = 0; j < prod.size(); ++j) prod[j] = f[j] * g[j];
  const double mass = integrate(prod, f.grid());
  if (!(mass > 1e-300)) throw NumericError("perturbation normalizing integral underflow");
  return DensityFunction::normalized(f.grid(), std::move(prod));
}

DensityFunction b_smul(double c, const DensityFunction& f) {
  if (!std::isfinite(c)) throw NumericError("powering scalar must be finite");
  std::vector<double> logs(f.size());
  for (std::size_t j = 0; j < logs.size(); ++j) logs[j] = c * std::log(f[j]);
  return DensityFunction::normalized(f.grid(), exp_normalized(f.grid(), std::move(logs)));
}

DensityFunction b_mean(std::span<const DensityFunction> densities) {
  if (densities.empty()) throw StructuralError("mean of an empty sequence");
  const Grid& grid = densities.front().grid();
  std::vector<double> acc(grid.size(), 0.0);
  for (const auto& f : densities) {
    require_same_grid(f.grid(), grid);
    const ClrFunction u = clr(f);
    for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += u[j];
  }
  const double inv_n = 1.0 / static_cast<double>(densities.size());
  for (double& v : acc) v *= inv_n;
  return clr_inv(grid, acc);
}

DensityFunction b_mean(const DistributionalSequence& seq) { return b_mean(seq.densities()); }

ClrFunction clr(const DensityFunction& f) {
  std::vector<double> logs(f.size());
  for (std::size_t j = 0; j < logs.size(); ++j) {
    if (!(f[j] > 0.0)) throw DomainError("clr of a non-positive density value");
    logs[j] = std::log(f[j]);
  }
  const double centre = integrate(logs, f.grid());
  for (double& v : logs) v -= centre;
  return ClrFunction(f.grid(), std::move(logs));
}

DensityFunction clr_inv(const Grid& grid, std::span<const double> values) {
  require_length(values.size(), grid);
  return DensityFunction::normalized(grid,
                                     exp_normalized(grid, {values.begin(), values.end()}));
}

DensityFunction clr_inv(const ClrFunction& u) { return clr_inv(u.grid(), u.values()); }

double b_inner(const DensityFunction& f, const DensityFunction& g) {
  require_same_grid(f.grid(), g.grid());
  const ClrFunction cf = clr(f);
  const ClrFunction cg = clr(g);
  return integrate_product(cf.values(), cg.values(), f.grid());
}

double b_norm(const DensityFunction& f) { return std::sqrt(std::max(0.0, b_inner(f, f))); }

double b_distance(const DensityFunction& f, const DensityFunction& g) {
  return b_norm(b_add(f, b_smul(-1.0, g)));
}

double first_moment(const DensityFunction& f) {
  return integrate_product(f.values(), f.grid().nodes(), f.grid());
}

double sup_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw StructuralError("length mismatch in sup distance");
  double worst = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
  return worst;
}

}  // namespace bcpd
