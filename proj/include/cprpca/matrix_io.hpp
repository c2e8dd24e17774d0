#pragma once

#include <iosfwd>
#include <string>

#include "cprpca/index_set.hpp"

namespace cprpca::io {

// CSV: one matrix row per line, comma separated, '.' decimal, no header.
Matrix read_matrix_csv(std::istream& in, const std::string& name = "<stream>");
void write_matrix_csv(std::ostream& out, const Matrix& m);

// Binary: "CPRM", u32 d1, u32 d2, then d1*d2 little-endian doubles, row-major.
Matrix read_matrix_binary(std::istream& in, const std::string& name = "<stream>");
void write_matrix_binary(std::ostream& out, const Matrix& m);

// Index sets: one "i,j" line per member, 1-based. Dimensions are not stored.
IndexSet read_index_set_csv(std::istream& in, int rows, int cols,
                            const std::string& name = "<stream>");
void write_index_set_csv(std::ostream& out, const IndexSet& s);

// File helpers. Matrix format is picked from the extension: ".bin"/".cprm"
// is binary, anything else CSV.
Matrix load_matrix(const std::string& path);
void save_matrix(const std::string& path, const Matrix& m);
IndexSet load_index_set(const std::string& path, int rows, int cols);
void save_index_set(const std::string& path, const IndexSet& s);

// Shortest decimal text that round-trips the double.
std::string format_double(double x);

}  // namespace cprpca::io
