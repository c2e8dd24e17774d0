#pragma once

#include "cprpca/index_set.hpp"

namespace cprpca {

// Throws InvalidInput naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

double norm_max(const Matrix& m);           // max |m_ij|
double norm_2inf(const Matrix& m);          // max row l2 norm
double norm_spectral(const Matrix& m);

struct PartialSvd {
  Matrix U;       // d1 x r, orthonormal columns
  Vector values;  // r, nonincreasing
  Matrix V;       // d2 x r, orthonormal columns

  Matrix reconstruct() const { return U * values.asDiagonal() * V.transpose(); }
};

// Leading r singular triplets, 1 <= r <= min(d1, d2).
PartialSvd partial_svd(const Matrix& m, int r);

// Keeps S_ij iff |S_ij| is at least the k-th largest magnitude of its row
// (k = floor(beta * d2)) and of its column (k = floor(beta * d1)). A zero
// budget keeps nothing.
Matrix truncate_sparse(const Matrix& s, double beta);

// Same operator with explicit per-row / per-column budgets.
Matrix truncate_sparse_counts(const Matrix& s, int k_row, int k_col);

// Keeps the k largest-magnitude entries; ties resolve to the lower row-major
// linear index.
Matrix hard_threshold(const Matrix& m, long k);

// Rescales every row whose l2 norm exceeds `radius` onto the sphere of that
// radius. This is the Euclidean projection onto {F : ||F||_{2,inf} <= radius}.
Matrix project_incoherent(const Matrix& f, double radius);

Matrix clamp_entries(const Matrix& m, double zeta);

// Alternates rank-r projection and entrywise clamping to [-zeta, zeta]
// (Dykstra corrections on the clamp side) for `sweeps` rounds. The clamp is
// applied last. Among the sweep outputs the one closest to `m` is returned, so
// the result is never farther from `m` than clamp(svd_r(m)).
Matrix project_rank_clamped(const Matrix& m, int r, double zeta, int sweeps = 1);

}  // namespace cprpca
