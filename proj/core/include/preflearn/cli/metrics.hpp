#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace preflearn::cli {

/// CSV metrics log. The header is written on open and every row is flushed
/// as soon as it is written. Values use the shortest round-trip decimal
/// form, so reading the file back reproduces them exactly.
class MetricsWriter {
 public:
  /// Throws IoError when the file cannot be created.
  MetricsWriter(const std::filesystem::path& path, std::vector<std::string> columns);

  /// Throws ShapeError when the row width differs from the header.
  void write(std::span<const double> row);
  const std::vector<std::string>& columns() const noexcept { return columns_; }

 private:
  std::filesystem::path path_;
  std::vector<std::string> columns_;
  std::ofstream out_;
};

struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

void write_metrics(const std::filesystem::path& path, const MetricsTable& table);
/// Throws IoError or ParseError (with the line number).
MetricsTable read_metrics(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace preflearn::cli
