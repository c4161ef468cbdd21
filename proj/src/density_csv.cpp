#include "bcpd/density_csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "bcpd/errors.hpp"

namespace bcpd {
namespace {

std::vector<double> parse_row(std::string_view line, std::size_t line_no) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<double> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    std::string_view field = line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    if (!field.empty() && field.front() == '+') field.remove_prefix(1);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc() || end != field.data() + field.size()) {
      throw CsvFormatError(line_no, "field " + std::to_string(out.size() + 1) + " is not a number: '" +
                                        std::string(field) + "'");
    }
    if (!std::isfinite(v)) {
      throw CsvFormatError(line_no, "field " + std::to_string(out.size() + 1) + " is not finite");
    }
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

DensityTable read_density_table(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> nodes;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    nodes = parse_row(line, line_no);
    break;
  }
  if (nodes.empty()) throw CsvFormatError(line_no == 0 ? 1 : line_no, "missing grid row");
  const std::size_t grid_line = line_no;
  if (nodes.size() < Grid::kMinNodes) {
    throw CsvFormatError(grid_line, "grid row has " + std::to_string(nodes.size()) +
                                        " nodes, need at least " + std::to_string(Grid::kMinNodes));
  }
  DensityTable table{Grid(nodes.size()), {}};
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (std::abs(nodes[j] - table.grid.node(j)) > 1e-9) {
      throw CsvFormatError(grid_line, "grid row is not a uniform partition of [0,1] (node " +
                                          std::to_string(j + 1) + ")");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto row = parse_row(line, line_no);
    if (row.size() != nodes.size()) {
      throw CsvFormatError(line_no, "row has " + std::to_string(row.size()) + " fields, expected " +
                                        std::to_string(nodes.size()));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

DensityTable read_density_table_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw StructuralError("cannot open " + path);
  return read_density_table(in);
}

std::vector<DensityFunction> densities_from_table(const DensityTable& table, bool zero_avoid_rows) {
  std::vector<DensityFunction> out;
  out.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    if (zero_avoid_rows) {
      out.push_back(zero_avoid(table.grid, row));
    } else {
      out.emplace_back(table.grid, row);
    }
  }
  return out;
}

void write_density_csv(std::ostream& out, const Grid& grid,
                       const std::vector<DensityFunction>& densities) {
  const auto write_row = [&out](std::span<const double> row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << format_double(row[j]);
    }
    out << '\n';
  };
  write_row(grid.nodes());
  for (const auto& f : densities) write_row(f.values());
}

void write_density_csv_file(const std::string& path, const Grid& grid,
                            const std::vector<DensityFunction>& densities) {
  std::ofstream out(path);
  if (!out) throw StructuralError("cannot write " + path);
  write_density_csv(out, grid, densities);
}

}  // namespace bcpd
