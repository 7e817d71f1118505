#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace softsense {

/// Named columns of doubles on a uniform time grid. This is the in-memory
/// form of every trajectory, input schedule and prediction export.
struct Table {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  double t0 = 0.0;
  double dt = 0.0;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t cols() const { return columns.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const;
  /// Throws std::out_of_range naming the missing column.
  const std::vector<double>& col(std::string_view name) const;
  std::vector<double>& col(std::string_view name);

  void add_column(std::string name, std::vector<double> values);
  /// Every `stride`-th row, starting at row 0.
  Table subsample(std::size_t stride) const;
};

/// Columnar binary layout (all little-endian):
///   char[8]  magic "SSCOLBIN"
///   u32      version (1)
///   u32      column count C
///   u64      row count N
///   f64      t0
///   f64      dt
///   C x { u32 name length, name bytes (UTF-8, no terminator) }
///   C x N f64 values, column-major
void write_columnar(const std::filesystem::path& path, const Table& table);
Table read_columnar(const std::filesystem::path& path);

/// Plain CSV with a header row; `stride` > 1 down-samples rows for plotting.
void write_csv(const std::filesystem::path& path, const Table& table, std::size_t stride = 1);
Table read_csv(const std::filesystem::path& path);

}  // namespace softsense
