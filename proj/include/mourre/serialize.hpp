#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mourre/core.hpp"

namespace mourre {

using json = nlohmann::json;

// Binary layout: "MULB", u32 version, u32 rows, u32 cols (little endian),
// then rows*cols complex doubles (re, im) in column-major order.
inline constexpr std::uint32_t kMulbVersion = 1;

void write_mulb(std::ostream& out, const DenseOperator& m);
DenseOperator read_mulb(std::istream& in);
void write_mulb_file(const std::string& path, const DenseOperator& m);
DenseOperator read_mulb_file(const std::string& path);

/// {"rows", "cols", "re": [...], "im": [...]} with column-major arrays.
json matrix_to_json(const DenseOperator& m);
DenseOperator matrix_from_json(const json& j);

/// Git-style blob hash of the canonical (sorted-key, compact) JSON dump.
std::string content_hash(const json& j);
std::string sha1_hex(const std::string& bytes);

/// RFC 4180 CSV with a leading comment line.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  void add_row(std::vector<std::string> cells);
  const std::vector<std::string>& columns() const { return columns_; }
  std::size_t rows() const { return rows_.size(); }
  std::string render(const std::string& comment) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// Shortest round-trip decimal form of a double.
std::string format_number(double x);

}  // namespace mourre
