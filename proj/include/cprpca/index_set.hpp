#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace cprpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Zero-based grid coordinate.
struct Entry {
  int row = 0;
  int col = 0;
  friend bool operator==(const Entry&, const Entry&) = default;
};

// A set of coordinates on a fixed d1 x d2 grid. Backed by a dense membership
// mask, so set algebra is linear in the grid size and iteration is always in
// row-major order.
class IndexSet {
 public:
  IndexSet() = default;
  IndexSet(int rows, int cols);

  static IndexSet full(int rows, int cols);
  static IndexSet from_entries(int rows, int cols, const std::vector<Entry>& entries);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t grid_size() const noexcept { return mask_.size(); }

  bool contains(int i, int j) const;
  bool contains(Entry e) const { return contains(e.row, e.col); }
  void insert(int i, int j);
  void erase(int i, int j);

  // Members in row-major order.
  std::vector<Entry> entries() const;

  template <typename F>
  void for_each(F&& f) const {
    for (int i = 0; i < rows_; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * cols_;
      for (int j = 0; j < cols_; ++j)
        if (mask_[base + j]) f(i, j);
    }
  }

  IndexSet complement() const;
  IndexSet unite(const IndexSet& other) const;
  IndexSet intersect(const IndexSet& other) const;
  IndexSet minus(const IndexSet& other) const;

  // 0/1 indicator matrix.
  Matrix indicator() const;
  // Copy of m with entries outside the set zeroed.
  Matrix restrict(const Matrix& m) const;

  // Support of a matrix: entries with a nonzero value.
  static IndexSet support(const Matrix& m);

  friend bool operator==(const IndexSet& a, const IndexSet& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.mask_ == b.mask_;
  }

 private:
  void check_same_dims(const IndexSet& other) const;
  std::size_t linear(int i, int j) const {
    return static_cast<std::size_t>(i) * cols_ + j;
  }

  int rows_ = 0;
  int cols_ = 0;
  std::size_t count_ = 0;
  std::vector<std::uint8_t> mask_;
};

}  // namespace cprpca
