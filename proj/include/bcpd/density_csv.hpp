#pragma once

// Density CSV: first row holds the grid nodes, each following row one density in time order.

#include <iosfwd>
#include <string>
#include <vector>

#include "bcpd/density.hpp"
#include "bcpd/errors.hpp"

namespace bcpd {

/// Raised for malformed CSV input; carries the 1-based line number.
class CsvFormatError : public StructuralError {
public:
  CsvFormatError(std::size_t line, const std::string& what)
      : StructuralError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

struct DensityTable {
  Grid grid;
  std::vector<std::vector<double>> rows;
};

/// Parses the table without imposing density invariants on the rows.
DensityTable read_density_table(std::istream& in);
DensityTable read_density_table_file(const std::string& path);

/// Rows become densities; with zero_avoid_rows the affine repair is applied to each row first.
std::vector<DensityFunction> densities_from_table(const DensityTable& table, bool zero_avoid_rows);

void write_density_csv(std::ostream& out, const Grid& grid,
                       const std::vector<DensityFunction>& densities);
void write_density_csv_file(const std::string& path, const Grid& grid,
                            const std::vector<DensityFunction>& densities);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace bcpd
