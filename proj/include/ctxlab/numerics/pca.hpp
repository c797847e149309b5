#pragma once

#include "ctxlab/common.hpp"

namespace ctxlab::num {

struct PcaResult {
  Matrix components;           ///< one unit-norm principal axis per row, descending variance
  Vector explained_variance;   ///< eigenvalues of the sample covariance
  Vector explained_ratio;      ///< explained_variance / total variance
  Vector mean;                 ///< centering offset
  bool degenerate = false;     ///< total variance is zero; ratios are then all zero

  int size() const { return static_cast<int>(components.rows()); }
};

/// PCA of the rows of `x` via SVD of the centered data. Keeps
/// min(rows - 1, cols) components. Axis signs are fixed so that the
/// largest-magnitude loading of each axis is positive.
PcaResult pca(const Matrix& x);

struct Subspace {
  Matrix basis;          ///< orthonormal rows
  Vector ratios;         ///< explained ratio of each kept axis
  bool warning = false;  ///< set when the PCA was degenerate
};

/// Smallest leading set of axes whose cumulative explained ratio reaches
/// `threshold` (at least one axis).
Subspace top_k_for_variance(const PcaResult& p, double threshold);

}  // namespace ctxlab::num
