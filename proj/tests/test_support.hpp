#pragma once
#include <vector>

#include "bcpd/density.hpp"
#include "oracles.hpp"

namespace testing_support {

inline oracle::Vec to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

inline bcpd::DensityFunction density(const bcpd::Grid& grid, const oracle::Vec& v) {
  return bcpd::DensityFunction::normalized(grid, v);
}

inline std::vector<oracle::Vec> to_vecs(const bcpd::DistributionalSequence& seq) {
  std::vector<oracle::Vec> out;
  for (const auto& f : seq) out.push_back(to_vec(f.values()));
  return out;
}

inline bcpd::DistributionalSequence random_sequence(std::mt19937_64& rng, const bcpd::Grid& grid,
                                                    std::size_t n) {
  std::vector<bcpd::DensityFunction> fs;
  for (std::size_t i = 0; i < n; ++i) fs.push_back(density(grid, oracle::random_density(rng, grid.size())));
  return bcpd::DistributionalSequence(std::move(fs));
}

inline bcpd::DistributionalSequence constant_sequence(const bcpd::DensityFunction& f, std::size_t n) {
  return bcpd::DistributionalSequence(std::vector<bcpd::DensityFunction>(n, f));
}

}  // namespace testing_support
