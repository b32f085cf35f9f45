#ifndef SHELAB_IO_HPP
#define SHELAB_IO_HPP

// CSV output with a '#'-prefixed metadata header. The header echoes the
// configuration as "# config: key = value" lines (readable by
// parse_config_text) and the noise generator identity. No timestamps are
// written, so identical runs give identical files.

#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shelab/config.hpp"
#include "shelab/errors.hpp"
#include "shelab/noise.hpp"

namespace shelab {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

using Metadata = std::vector<std::pair<std::string, std::string>>;

/// Standard header: config echo, rng_family, rng_version, seed.
inline Metadata run_metadata(const SimConfig& cfg) {
  Metadata m;
  for (auto& [k, v] : config_entries(cfg)) m.emplace_back("config: " + k, v);
  m.emplace_back("rng_family", std::string(kRngFamily));
  m.emplace_back("rng_version", std::string(kRngVersion));
  m.emplace_back("seed", std::to_string(cfg.seed));
  return m;
}

inline std::string format_csv(const Metadata& meta, const CsvTable& table) {
  std::string out;
  for (const auto& [k, v] : meta) {
    // "config: key" entries use " = " so the line parses as a config entry.
    if (k.rfind("config: ", 0) == 0) out += "# " + k + " = " + v + "\n";
    else out += "# " + k + ": " + v + "\n";
  }
  for (std::size_t c = 0; c < table.columns.size(); ++c)
    out += (c ? "," : "") + table.columns[c];
  out += "\n";
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size())
      throw std::invalid_argument("format_csv: row width differs from header");
    for (std::size_t c = 0; c < row.size(); ++c) out += (c ? "," : "") + format_double(row[c]);
    out += "\n";
  }
  return out;
}

/// Lines of `text` that do not start with '#'.
inline std::string csv_body(const std::string& text) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    if (text[pos] != '#') out.append(text, pos, end - pos + 1);
    pos = end + 1;
  }
  return out;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

inline void write_csv(const std::string& path, const Metadata& meta, const CsvTable& table) {
  write_text(path, format_csv(meta, table));
}

}  // namespace shelab

#endif  // SHELAB_IO_HPP
