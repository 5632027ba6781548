#include "preflearn/cli/metrics.hpp"

#include <charconv>
#include <sstream>

#include "preflearn/common/errors.hpp"

namespace preflearn::cli {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::vector<std::string> columns)
    : path_(path), columns_(std::move(columns)), out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot write metrics file " + path.string());
  for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
  out_ << '\n' << std::flush;
  if (!out_) throw IoError("write failed: " + path.string());
}

void MetricsWriter::write(std::span<const double> row) {
  if (row.size() != columns_.size())
    throw ShapeError("metrics row has " + std::to_string(row.size()) + " values, header has " +
                     std::to_string(columns_.size()));
  for (std::size_t i = 0; i < row.size(); ++i) out_ << (i ? "," : "") << format_double(row[i]);
  out_ << '\n' << std::flush;
  if (!out_) throw IoError("write failed: " + path_.string());
}

void write_metrics(const std::filesystem::path& path, const MetricsTable& table) {
  MetricsWriter w(path, table.columns);
  for (const auto& r : table.rows) w.write(r);
}

MetricsTable read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read metrics file " + path.string());
  MetricsTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (lineno == 1) {
      t.columns = std::move(cells);
      continue;
    }
    if (line.empty()) continue;
    if (cells.size() != t.columns.size()) throw ParseError(lineno, "expected " + std::to_string(t.columns.size()) + " cells");
    std::vector<double> row;
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) throw ParseError(lineno, "bad number '" + c + "'");
      row.push_back(v);
    }
    t.rows.push_back(std::move(row));
  }
  if (lineno == 0) throw ParseError(1, "missing header");
  return t;
}

}  // namespace preflearn::cli
