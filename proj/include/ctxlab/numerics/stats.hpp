#pragma once

#include "ctxlab/common.hpp"

#include <span>

namespace ctxlab::num {

/// Regularized incomplete beta I_x(a, b), evaluated with the Lentz continued
/// fraction (and the symmetry relation on the slow side).
double incomplete_beta(double a, double b, double x);

/// Student-t CDF with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

/// Two-sided tail probability P(|T| >= |t|).
double student_t_two_sided(double t, double dof);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;
};

/// Sample Pearson correlation; two-sided p from a t distribution with n-2 dof.
/// Throws DegenerateError when either input has zero variance.
Correlation pearson(std::span<const double> a, std::span<const double> b);

/// Pearson correlation of average ranks.
Correlation spearman(std::span<const double> a, std::span<const double> b);

struct TTest {
  double t = 0.0;
  double p_value = 1.0;
  double mean_difference = 0.0;
  int n = 0;
};

/// Paired t-test on d = a - b. Throws DegenerateError when the differences
/// have zero variance.
TTest paired_ttest(std::span<const double> a, std::span<const double> b);

double mean(std::span<const double> v);
/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> v);

}  // namespace ctxlab::num
