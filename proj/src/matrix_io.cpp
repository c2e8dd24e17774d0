#include "cprpca/matrix_io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>
#include <vector>

#include "cprpca/error.hpp"

namespace cprpca::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view field, T& value) {
  field = trim(field);
  if (field.empty()) return false;
  if (field.front() == '+') field.remove_prefix(1);
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool has_ext(const std::string& path, std::string_view ext) {
  return path.size() >= ext.size() &&
         path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xFFu);
  out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& name) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4))
    throw ParseError(name, 0, "truncated header");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[k]) << (8 * k);
  return v;
}

}  // namespace

std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), ptr);
}

Matrix read_matrix_csv(std::istream& in, const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::vector<double> row;
    for (auto field : split_commas(line)) {
      double v = 0.0;
      if (!parse_number(field, v) || !std::isfinite(v))
        throw ParseError(name, lineno, "bad numeric field '" + std::string(trim(field)) + "'");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(name, lineno,
                       "expected " + std::to_string(rows.front().size()) + " fields, got " +
                           std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(name, lineno, "empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Matrix read_matrix_binary(std::istream& in, const std::string& name) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "CPRM", 4) != 0)
    throw ParseError(name, 0, "missing CPRM magic");
  const std::uint32_t d1 = get_u32(in, name);
  const std::uint32_t d2 = get_u32(in, name);
  if (d1 == 0 || d2 == 0) throw ParseError(name, 0, "zero dimension");
  Matrix m(d1, d2);
  for (std::uint32_t i = 0; i < d1; ++i)
    for (std::uint32_t j = 0; j < d2; ++j) {
      std::array<unsigned char, 8> b{};
      if (!in.read(reinterpret_cast<char*>(b.data()), 8))
        throw ParseError(name, 0, "truncated payload");
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
      const double v = std::bit_cast<double>(bits);
      if (!std::isfinite(v)) throw ParseError(name, 0, "non-finite entry");
      m(i, j) = v;
    }
  return m;
}

void write_matrix_binary(std::ostream& out, const Matrix& m) {
  out.write("CPRM", 4);
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      std::array<char, 8> b{};
      for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((bits >> (8 * k)) & 0xFFu);
      out.write(b.data(), 8);
    }
}

IndexSet read_index_set_csv(std::istream& in, int rows, int cols, const std::string& name) {
  IndexSet s(rows, cols);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    long i = 0, j = 0;
    if (fields.size() != 2 || !parse_number(fields[0], i) || !parse_number(fields[1], j))
      throw ParseError(name, lineno, "expected 'i,j'");
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw ParseError(name, lineno, "index outside " + std::to_string(rows) + "x" +
                                         std::to_string(cols) + " grid");
    s.insert(static_cast<int>(i - 1), static_cast<int>(j - 1));
  }
  return s;
}

void write_index_set_csv(std::ostream& out, const IndexSet& s) {
  s.for_each([&](int i, int j) { out << (i + 1) << ',' << (j + 1) << '\n'; });
}

Matrix load_matrix(const std::string& path) {
  const bool binary = has_ext(path, ".bin") || has_ext(path, ".cprm");
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw InvalidInput("cannot open " + path);
  return binary ? read_matrix_binary(in, path) : read_matrix_csv(in, path);
}

void save_matrix(const std::string& path, const Matrix& m) {
  const bool binary = has_ext(path, ".bin") || has_ext(path, ".cprm");
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw InvalidInput("cannot write " + path);
  if (binary)
    write_matrix_binary(out, m);
  else
    write_matrix_csv(out, m);
}

IndexSet load_index_set(const std::string& path, int rows, int cols) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  return read_index_set_csv(in, rows, cols, path);
}

void save_index_set(const std::string& path, const IndexSet& s) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write " + path);
  write_index_set_csv(out, s);
}

}  // namespace cprpca::io
