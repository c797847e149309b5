#pragma once

#include "ctxlab/common.hpp"

#include <cstdint>

namespace ctxlab::num {

/// Multinomial linear classifier: scores = x * weights^T + bias^T.
struct LinearClassifier {
  Matrix weights;  ///< n_classes x n_features
  Vector bias;     ///< n_classes
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;  ///< max-abs gradient entry at return

  int n_classes() const { return static_cast<int>(weights.rows()); }
  Matrix scores(const Matrix& x) const;
  /// Argmax class per row; ties go to the lower class index.
  Labels predict(const Matrix& x) const;
  double accuracy(const Matrix& x, const Labels& labels) const;
};

struct LogisticOptions {
  double l2 = 1.0;
  double tolerance = 1e-6;
  int max_iterations = 200;
};

/// Minimizes mean cross-entropy + (l2/2)*||W||^2 (bias unpenalized) from a
/// zero start with damped Newton steps and a backtracking line search.
LinearClassifier logistic_fit(const Matrix& x, const Labels& labels, int n_classes, const LogisticOptions& opt = {});

/// Mean cross-entropy plus penalty, and its gradient, at (weights, bias).
/// Exposed for the optimality checks in the tests.
double logistic_objective(const Matrix& x, const Labels& labels, const Matrix& weights, const Vector& bias, double l2,
                          Matrix* grad_w = nullptr, Vector* grad_b = nullptr);

/// Shuffles 0..n-1 with `seed` and cuts the permutation into k contiguous
/// folds whose sizes differ by at most one.
std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed);

double kfold_cv_accuracy(const Matrix& x, const Labels& labels, int n_classes, int k, double l2, std::uint64_t seed);

}  // namespace ctxlab::num
