#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "tailwait/panel.hpp"

namespace tailwait {

inline constexpr const char* kVersion = "0.3.1";

// Shortest round-trip decimal form.
std::string format_double(double x);

// FNV-1a over the compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

// Buffered CSV table; every written file gets a <file>.meta.jsonl sidecar.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& cell(const std::string& s);
  CsvTable& cell(double x);
  CsvTable& cell(long long x);
  CsvTable& cell(std::size_t x) { return cell(static_cast<long long>(x)); }
  CsvTable& cell(int x) { return cell(static_cast<long long>(x)); }
  void end_row();
  std::size_t rows() const { return rows_; }
  std::string str() const { return out_; }

 private:
  std::size_t columns_ = 0;
  std::size_t in_row_ = 0;
  std::size_t rows_ = 0;
  std::string out_;
};

// Throws std::runtime_error on IO failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

nlohmann::json metadata_record(const std::filesystem::path& file, const nlohmann::json& config,
                               nlohmann::json extra = nlohmann::json::object());
void write_csv(const std::filesystem::path& path, const CsvTable& table,
               const nlohmann::json& config, nlohmann::json extra = nlohmann::json::object());
std::filesystem::path sidecar_path(const std::filesystem::path& csv);
// First record of the sidecar, or null when there is none.
nlohmann::json read_sidecar(const std::filesystem::path& csv);

std::string panel_csv(const Panel& panel);
void write_panel(const std::filesystem::path& path, const Panel& panel, const nlohmann::json& config);

// Header "time,<name>,...". Site coordinates come from the sidecar when
// present, otherwise sites are 1..n on a line. Throws DataError naming the
// row (1-based, header = row 1) and column on malformed input.
Panel ingest_csv(const std::filesystem::path& path);
Panel parse_panel_csv(const std::string& text, const nlohmann::json& sidecar = nullptr);

// Plain numeric table reader for the intermediate files.
struct CsvData {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t column(const std::string& name) const;
};
CsvData read_csv(const std::filesystem::path& path);
double parse_double(const std::string& cell, std::size_t row, std::size_t col);

}  // namespace tailwait
