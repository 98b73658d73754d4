#include "tailwait/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "tailwait/errors.hpp"

namespace tailwait {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, end);
}

std::string config_hash(const nlohmann::json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (k) out_ += ',';
    out_ += header[k];
  }
  out_ += '\n';
}

CsvTable& CsvTable::cell(const std::string& s) {
  if (in_row_ == columns_) throw std::logic_error("CsvTable: too many cells in row");
  if (in_row_) out_ += ',';
  out_ += s;
  ++in_row_;
  return *this;
}

CsvTable& CsvTable::cell(double x) { return cell(format_double(x)); }
CsvTable& CsvTable::cell(long long x) { return cell(std::to_string(x)); }

void CsvTable::end_row() {
  if (in_row_ != columns_) throw std::logic_error("CsvTable: short row");
  out_ += '\n';
  in_row_ = 0;
  ++rows_;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json metadata_record(const fs::path& file, const nlohmann::json& config, nlohmann::json extra) {
  nlohmann::json rec = {{"file", file.filename().string()},
                        {"version", kVersion},
                        {"config_hash", config_hash(config)},
                        {"config", config}};
  for (auto& [k, v] : extra.items()) rec[k] = v;
  return rec;
}

fs::path sidecar_path(const fs::path& csv) { return fs::path(csv.string() + ".meta.jsonl"); }

void write_csv(const fs::path& path, const CsvTable& table, const nlohmann::json& config, nlohmann::json extra) {
  write_text(path, table.str());
  write_text(sidecar_path(path), metadata_record(path, config, std::move(extra)).dump() + "\n");
}

nlohmann::json read_sidecar(const fs::path& csv) {
  const auto side = sidecar_path(csv);
  if (!fs::exists(side)) return nullptr;
  std::istringstream in(read_text(side));
  std::string line;
  if (!std::getline(in, line)) return nullptr;
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad metadata sidecar " + side.string() + ": " + e.what());
  }
}

std::string panel_csv(const Panel& panel) {
  std::vector<std::string> header{"time"};
  for (std::size_t i = 0; i < panel.n_sites(); ++i) header.push_back("site_" + std::to_string(i + 1));
  CsvTable t(header);
  for (std::size_t j = 0; j < panel.n_times(); ++j) {
    t.cell(panel.times[j]);
    for (std::size_t i = 0; i < panel.n_sites(); ++i) t.cell(panel.values[i][j]);
    t.end_row();
  }
  return t.str();
}

void write_panel(const fs::path& path, const Panel& panel, const nlohmann::json& config) {
  nlohmann::json sites = nlohmann::json::array();
  for (const auto& x : panel.sites) sites.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  write_text(path, panel_csv(panel));
  write_text(sidecar_path(path), metadata_record(path, config, {{"sites", sites}}).dump() + "\n");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::vector<std::string>> split_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    rows.push_back(split_line(line));
  }
  return rows;
}

}  // namespace

double parse_double(const std::string& raw, std::size_t row, std::size_t col) {
  const std::string cell = trim(raw);
  const auto where = [&] { return " at row " + std::to_string(row) + ", column " + std::to_string(col); };
  if (cell.empty() || cell == "NA" || cell == "NaN" || cell == "nan") {
    throw DataError("missing value" + where());
  }
  double v = 0.0;
  const char* first = cell.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw DataError("non-numeric cell '" + cell + "'" + where());
  }
  if (!std::isfinite(v)) throw DataError("non-finite value" + where());
  return v;
}

Panel parse_panel_csv(const std::string& text, const nlohmann::json& sidecar) {
  const auto rows = split_rows(text);
  if (rows.empty()) throw DataError("panel csv: empty file");
  const auto& header = rows[0];
  if (header.size() < 2 || trim(header[0]) != "time") {
    throw DataError("panel csv: header must be time,<site>,... (row 1)");
  }
  const std::size_t n = header.size() - 1;
  Panel p;
  p.values.assign(n, {});
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw DataError("panel csv: row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) +
                      " cells, expected " + std::to_string(header.size()));
    }
    const double t = parse_double(row[0], r + 1, 1);
    if (!p.times.empty() && !(t > p.times.back())) {
      throw DataError("panel csv: time not strictly increasing at row " + std::to_string(r + 1));
    }
    p.times.push_back(t);
    for (std::size_t i = 0; i < n; ++i) p.values[i].push_back(parse_double(row[i + 1], r + 1, i + 2));
  }
  if (p.times.empty()) throw DataError("panel csv: no data rows");
  if (!sidecar.is_null() && sidecar.contains("sites")) {
    const auto& s = sidecar["sites"];
    if (s.size() != n) throw DataError("panel csv: sidecar lists " + std::to_string(s.size()) + " sites, file has " + std::to_string(n));
    for (const auto& c : s) {
      const auto v = c.get<std::vector<double>>();
      if (v.empty() || v.size() > static_cast<std::size_t>(kMaxDim)) throw DataError("panel csv: bad site coordinates in sidecar");
      Vec x(static_cast<Eigen::Index>(v.size()));
      for (std::size_t k = 0; k < v.size(); ++k) x[static_cast<Eigen::Index>(k)] = v[k];
      p.sites.push_back(x);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) p.sites.push_back(make_vec({static_cast<double>(i + 1)}));
  }
  return p;
}

Panel ingest_csv(const fs::path& path) { return parse_panel_csv(read_text(path), read_sidecar(path)); }

std::size_t CsvData::column(const std::string& name) const {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw DataError("csv: missing column '" + name + "'");
}

CsvData read_csv(const fs::path& path) {
  auto rows = split_rows(read_text(path));
  if (rows.empty()) throw DataError("csv: empty file " + path.string());
  CsvData d;
  d.header = rows[0];
  for (auto& h : d.header) h = trim(h);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != d.header.size()) {
      throw DataError(path.filename().string() + ": ragged row " + std::to_string(r + 1));
    }
    d.rows.push_back(std::move(rows[r]));
  }
  return d;
}

}  // namespace tailwait
