#include "cprpca/index_set.hpp"

#include <algorithm>
#include <string>

#include "cprpca/error.hpp"

namespace cprpca {

IndexSet::IndexSet(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw DimensionError("IndexSet: negative dimensions");
  mask_.assign(static_cast<std::size_t>(rows) * cols, 0);
}

IndexSet IndexSet::full(int rows, int cols) {
  IndexSet s(rows, cols);
  std::fill(s.mask_.begin(), s.mask_.end(), 1);
  s.count_ = s.mask_.size();
  return s;
}

IndexSet IndexSet::from_entries(int rows, int cols, const std::vector<Entry>& entries) {
  IndexSet s(rows, cols);
  for (const auto& e : entries) s.insert(e.row, e.col);
  return s;
}

bool IndexSet::contains(int i, int j) const {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_) return false;
  return mask_[linear(i, j)] != 0;
}

void IndexSet::insert(int i, int j) {
  if (i < 0 || i >= rows_ || j < 0 || j >= cols_)
    throw DimensionError("IndexSet: coordinate (" + std::to_string(i + 1) + "," +
                         std::to_string(j + 1) + ") outside grid");
  auto& m = mask_[linear(i, j)];
  if (!m) {
    m = 1;
    ++count_;
  }
}

void IndexSet::erase(int i, int j) {
  if (!contains(i, j)) return;
  mask_[linear(i, j)] = 0;
  --count_;
}

std::vector<Entry> IndexSet::entries() const {
  std::vector<Entry> out;
  out.reserve(count_);
  for_each([&](int i, int j) { out.push_back({i, j}); });
  return out;
}

void IndexSet::check_same_dims(const IndexSet& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_)
    throw DimensionError("IndexSet: grid dimensions differ");
}

IndexSet IndexSet::complement() const {
  IndexSet out(rows_, cols_);
  for (std::size_t k = 0; k < mask_.size(); ++k) out.mask_[k] = mask_[k] ? 0 : 1;
  out.count_ = mask_.size() - count_;
  return out;
}

namespace {

template <typename Op>
IndexSet combine(const IndexSet& a, const std::vector<std::uint8_t>& ma,
                 const std::vector<std::uint8_t>& mb, Op op) {
  IndexSet out(a.rows(), a.cols());
  for (std::size_t k = 0; k < ma.size(); ++k)
    if (op(ma[k] != 0, mb[k] != 0))
      out.insert(static_cast<int>(k / a.cols()), static_cast<int>(k % a.cols()));
  return out;
}

}  // namespace

IndexSet IndexSet::unite(const IndexSet& other) const {
  check_same_dims(other);
  return combine(*this, mask_, other.mask_, [](bool x, bool y) { return x || y; });
}

IndexSet IndexSet::intersect(const IndexSet& other) const {
  check_same_dims(other);
  return combine(*this, mask_, other.mask_, [](bool x, bool y) { return x && y; });
}

IndexSet IndexSet::minus(const IndexSet& other) const {
  check_same_dims(other);
  return combine(*this, mask_, other.mask_, [](bool x, bool y) { return x && !y; });
}

Matrix IndexSet::indicator() const {
  Matrix m = Matrix::Zero(rows_, cols_);
  for_each([&](int i, int j) { m(i, j) = 1.0; });
  return m;
}

Matrix IndexSet::restrict(const Matrix& m) const {
  if (m.rows() != rows_ || m.cols() != cols_)
    throw DimensionError("IndexSet::restrict: matrix shape does not match grid");
  Matrix out = Matrix::Zero(rows_, cols_);
  for_each([&](int i, int j) { out(i, j) = m(i, j); });
  return out;
}

IndexSet IndexSet::support(const Matrix& m) {
  IndexSet s(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (m(i, j) != 0.0) s.insert(i, j);
  return s;
}

}  // namespace cprpca
