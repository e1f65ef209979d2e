#pragma once

// Fixed-header numeric CSV in and out. Reading is strict: the header must
// match the documented columns exactly and every field must parse.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "snspd/errors.hpp"

namespace snspd::csv {

using Row = std::vector<double>;

namespace detail {

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) {
      cell.remove_suffix(1);
    }
    out.push_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Parses CSV text whose first non-comment line is `columns` joined by commas.
/// Lines starting with '#' and blank lines are skipped.
inline std::vector<Row> parse(std::string_view text, const std::vector<std::string>& columns,
                              const std::string& source = "<csv>") {
  std::vector<Row> rows;
  bool header_seen = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos || line.front() == '#') {
      if (nl == text.size()) break;
      continue;
    }
    const auto cells = detail::split(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (!header_seen) {
      bool match = cells.size() == columns.size();
      for (std::size_t i = 0; match && i < cells.size(); ++i) match = cells[i] == columns[i];
      if (!match) {
        std::string want;
        for (std::size_t i = 0; i < columns.size(); ++i) want += (i ? "," : "") + columns[i];
        fail(ErrorKind::InvalidArgument,
             where + ": header '" + std::string(line) + "' does not match '" + want + "'");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != columns.size()) {
      fail(ErrorKind::InvalidArgument, where + ": expected " + std::to_string(columns.size()) +
                                           " fields, found " + std::to_string(cells.size()));
    }
    Row row(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto* b = cells[i].data();
      const auto* e = b + cells[i].size();
      auto [ptr, ec] = std::from_chars(b, e, row[i]);
      if (cells[i].empty() || ec != std::errc{} || ptr != e || !std::isfinite(row[i])) {
        fail(ErrorKind::InvalidArgument, where + ": field '" + columns[i] + "' = '" +
                                             std::string(cells[i]) + "' is not a finite number");
      }
    }
    rows.push_back(std::move(row));
    if (nl == text.size()) break;
  }
  if (!header_seen) fail(ErrorKind::InvalidArgument, source + ": empty file, header missing");
  return rows;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<Row> read(const std::filesystem::path& path,
                             const std::vector<std::string>& columns) {
  return parse(read_text(path), columns, path.string());
}

/// Shortest-digit-stable formatting: 12 significant digits, locale-free.
inline std::string format(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline std::string to_text(const std::vector<std::string>& columns, const std::vector<Row>& rows) {
  std::string out;
  for (std::size_t i = 0; i < columns.size(); ++i) out += (i ? "," : "") + columns[i];
  out += '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) out += ',';
      out += format(r[i]);
    }
    out += '\n';
  }
  return out;
}

/// Writes via a sibling temporary file and rename, so readers never see a
/// partial file.
inline void write_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Config, "cannot write '" + tmp + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorKind::Config, "write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Config, "cannot move '" + tmp + "' into place: " + ec.message());
}

}  // namespace snspd::csv
