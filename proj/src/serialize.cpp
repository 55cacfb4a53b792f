#include "mourre/serialize.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/sha.h>

namespace mourre {

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xff),
                                 static_cast<unsigned char>((v >> 8) & 0xff),
                                 static_cast<unsigned char>((v >> 16) & 0xff),
                                 static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  in.read(reinterpret_cast<char*>(b.data()), 4);
  if (!in) throw Error("truncated MULB header");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((bits >> (8 * i)) & 0xff));
}

double get_f64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw Error("truncated MULB payload");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

}  // namespace

void write_mulb(std::ostream& out, const DenseOperator& m) {
  out.write("MULB", 4);
  put_u32(out, kMulbVersion);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      put_f64(out, m(r, c).real());
      put_f64(out, m(r, c).imag());
    }
}

DenseOperator read_mulb(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MULB", 4) != 0) throw Error("not a MULB blob");
  std::uint32_t version = get_u32(in);
  if (version != kMulbVersion) throw Error("unsupported MULB version " + std::to_string(version));
  std::uint32_t rows = get_u32(in), cols = get_u32(in);
  DenseOperator m(rows, cols);
  for (std::uint32_t c = 0; c < cols; ++c)
    for (std::uint32_t r = 0; r < rows; ++r) {
      double re = get_f64(in);
      double im = get_f64(in);
      m(r, c) = cplx(re, im);
    }
  return m;
}

void write_mulb_file(const std::string& path, const DenseOperator& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path);
  write_mulb(out, m);
}

DenseOperator read_mulb_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return read_mulb(in);
}

json matrix_to_json(const DenseOperator& m) {
  json re = json::array(), im = json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      re.push_back(m(r, c).real());
      im.push_back(m(r, c).imag());
    }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"re", re}, {"im", im}};
}

DenseOperator matrix_from_json(const json& j) {
  auto rows = j.at("rows").get<Eigen::Index>();
  auto cols = j.at("cols").get<Eigen::Index>();
  const auto& re = j.at("re");
  const auto& im = j.at("im");
  if (static_cast<Eigen::Index>(re.size()) != rows * cols ||
      static_cast<Eigen::Index>(im.size()) != rows * cols)
    throw Error("matrix JSON has the wrong number of entries");
  DenseOperator m(rows, cols);
  std::size_t i = 0;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r, ++i)
      m(r, c) = cplx(re[i].get<double>(), im[i].get<double>());
  return m;
}

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest);
  std::ostringstream os;
  for (unsigned char c : digest) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(c);
  return os.str();
}

std::string content_hash(const json& j) {
  std::string body = j.dump();  // nlohmann::json keeps object keys sorted
  std::string blob = "blob " + std::to_string(body.size());
  blob.push_back('\0');
  blob += body;
  return sha1_hex(blob);
}

void CsvTable::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size()) throw Error("CSV row has the wrong number of cells");
  rows_.push_back(std::move(cells));
}

namespace {
std::string quote(const std::string& cell) {
  if (cell.find_first_of(",\"\r\n") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}
}  // namespace

std::string CsvTable::render(const std::string& comment) const {
  std::string out;
  if (!comment.empty()) out += "# " + comment + "\r\n";
  for (std::size_t i = 0; i < columns_.size(); ++i) out += (i ? "," : "") + quote(columns_[i]);
  out += "\r\n";
  for (const auto& row : rows_) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + quote(row[i]);
    out += "\r\n";
  }
  return out;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace mourre
