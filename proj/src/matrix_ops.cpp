#include "cprpca/matrix_ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cprpca/error.hpp"

namespace cprpca {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw InvalidInput(std::string(what) + ": non-finite entry");
}

double norm_max(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

double norm_2inf(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.rowwise().norm().maxCoeff();
}

double norm_spectral(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

PartialSvd partial_svd(const Matrix& m, int r) {
  const int d1 = static_cast<int>(m.rows());
  const int d2 = static_cast<int>(m.cols());
  if (r < 1 || r > std::min(d1, d2))
    throw DimensionError("partial_svd: rank " + std::to_string(r) + " outside [1, " +
                         std::to_string(std::min(d1, d2)) + "]");
  require_finite(m, "partial_svd");

  PartialSvd out;
  // Jacobi is more accurate on small problems; BDCSVD switches to it
  // internally below its block size anyway.
  if (std::min(d1, d2) <= 16) {
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU().leftCols(r);
    out.values = svd.singularValues().head(r);
    out.V = svd.matrixV().leftCols(r);
  } else {
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    out.U = svd.matrixU().leftCols(r);
    out.values = svd.singularValues().head(r);
    out.V = svd.matrixV().leftCols(r);
  }
  return out;
}

namespace {

// k-th largest of |values| (1-based k); +inf when k == 0.
double kth_largest_abs(std::vector<double>& scratch, int k) {
  if (k <= 0) return std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(scratch.size());
  if (k > n) k = n;
  auto nth = scratch.begin() + (k - 1);
  std::nth_element(scratch.begin(), nth, scratch.end(), std::greater<>());
  return *nth;
}

}  // namespace

Matrix truncate_sparse_counts(const Matrix& s, int k_row, int k_col) {
  const Eigen::Index d1 = s.rows();
  const Eigen::Index d2 = s.cols();
  Matrix out = Matrix::Zero(d1, d2);
  if (k_row <= 0 || k_col <= 0 || s.size() == 0) return out;

  Vector row_cut(d1), col_cut(d2);
  std::vector<double> scratch;
  scratch.resize(static_cast<std::size_t>(d2));
  for (Eigen::Index i = 0; i < d1; ++i) {
    for (Eigen::Index j = 0; j < d2; ++j) scratch[j] = std::abs(s(i, j));
    row_cut(i) = kth_largest_abs(scratch, k_row);
  }
  scratch.resize(static_cast<std::size_t>(d1));
  for (Eigen::Index j = 0; j < d2; ++j) {
    for (Eigen::Index i = 0; i < d1; ++i) scratch[i] = std::abs(s(i, j));
    col_cut(j) = kth_largest_abs(scratch, k_col);
  }
  for (Eigen::Index j = 0; j < d2; ++j)
    for (Eigen::Index i = 0; i < d1; ++i) {
      const double a = std::abs(s(i, j));
      if (a >= row_cut(i) && a >= col_cut(j)) out(i, j) = s(i, j);
    }
  return out;
}

Matrix truncate_sparse(const Matrix& s, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0))
    throw InvalidParameter("truncate_sparse: beta must lie in [0, 1]");
  require_finite(s, "truncate_sparse");
  const int k_row = static_cast<int>(std::floor(beta * static_cast<double>(s.cols())));
  const int k_col = static_cast<int>(std::floor(beta * static_cast<double>(s.rows())));
  return truncate_sparse_counts(s, k_row, k_col);
}

Matrix hard_threshold(const Matrix& m, long k) {
  const long n = static_cast<long>(m.size());
  if (k < 0 || k > n) throw InvalidParameter("hard_threshold: k outside [0, d1*d2]");
  const Eigen::Index d2 = m.cols();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  // Row-major linear index l -> (l / d2, l % d2).
  auto mag = [&](long l) { return std::abs(m(l / d2, l % d2)); };
  auto before = [&](long a, long b) {
    const double ma = mag(a), mb = mag(b);
    return ma != mb ? ma > mb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), before);
  Matrix out = Matrix::Zero(m.rows(), m.cols());
  for (long t = 0; t < k; ++t) {
    const long l = order[static_cast<std::size_t>(t)];
    out(l / d2, l % d2) = m(l / d2, l % d2);
  }
  return out;
}

Matrix project_incoherent(const Matrix& f, double radius) {
  if (!(radius >= 0.0)) throw InvalidParameter("project_incoherent: negative radius");
  require_finite(f, "project_incoherent");
  Matrix out = f;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n > radius) {
      if (radius == 0.0)
        out.row(i).setZero();
      else
        out.row(i) *= radius / n;
    }
  }
  return out;
}

Matrix clamp_entries(const Matrix& m, double zeta) {
  return m.cwiseMax(-zeta).cwiseMin(zeta);
}

Matrix project_rank_clamped(const Matrix& m, int r, double zeta, int sweeps) {
  if (!(zeta >= 0.0)) throw InvalidParameter("project_rank_clamped: zeta must be >= 0");
  if (sweeps < 1) throw InvalidParameter("project_rank_clamped: sweeps must be >= 1");
  if (r < 1 || r > std::min(m.rows(), m.cols()))
    throw InvalidParameter("project_rank_clamped: rank out of range");
  if (zeta == 0.0) return Matrix::Zero(m.rows(), m.cols());

  Matrix x = m;
  Matrix q = Matrix::Zero(m.rows(), m.cols());  // clamp-side correction
  Matrix best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int s = 0; s < sweeps; ++s) {
    // The rank set is not convex, so its Dykstra increment is dropped and the
    // plain projection is used there.
    const Matrix y = partial_svd(x, r).reconstruct();
    x = clamp_entries(y + q, zeta);
    q = y + q - x;
    const double dist = (x - m).norm();
    if (dist < best_dist) {
      best_dist = dist;
      best = x;
    }
  }
  return best;
}

}  // namespace cprpca
