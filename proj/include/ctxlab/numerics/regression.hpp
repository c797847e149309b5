#pragma once

#include "ctxlab/common.hpp"

#include <cstdint>

namespace ctxlab::num {

struct RegressionResult {
  Vector coefficients;  ///< one per feature column
  double intercept = 0.0;
  double r2_train = 0.0;
  double r2_test = 0.0;
  Vector p_values;      ///< two-sided t-test per coefficient (NaN without residual dof)
  double intercept_p_value = 1.0;
  bool ridge_fallback = false;

  Vector predict(const Matrix& x) const;
};

/// Ordinary least squares with an intercept. A rank-deficient design falls
/// back to ridge with l2 = 1e-8 and sets `ridge_fallback`.
RegressionResult ols_fit(const Matrix& x, const Vector& y);

/// Coefficient of determination of `pred` against `y` (1 - SS_res/SS_tot).
double r_squared(const Vector& y, const Vector& pred);

struct BootstrapSummary {
  double mean_r2_test = 0.0;
  double std_r2_test = 0.0;
  double mean_r2_train = 0.0;
  int n_boot = 0;
  int ridge_fallbacks = 0;  ///< replicates that needed the ridge fallback
  RegressionResult full;    ///< fit on all rows, with p-values
};

/// Row split used by bootstrap replicate `replicate`: the first
/// round(train_frac * n) entries of a seeded permutation train, the rest test.
struct Split {
  std::vector<int> train;
  std::vector<int> test;
};
Split bootstrap_split(int n, double train_frac, std::uint64_t seed, int replicate);

/// Repeated random train/test splits; R^2 measured on each held-out part.
BootstrapSummary ols_bootstrap(const Matrix& x, const Vector& y, int n_boot, double train_frac, std::uint64_t seed);

}  // namespace ctxlab::num
