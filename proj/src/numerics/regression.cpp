#include "ctxlab/numerics/regression.hpp"

#include "ctxlab/numerics/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace ctxlab::num {

namespace {

constexpr double kRidgeFallback = 1e-8;

Matrix with_intercept(const Matrix& x) {
  Matrix a(x.rows(), x.cols() + 1);
  a.col(0).setOnes();
  a.rightCols(x.cols()) = x;
  return a;
}

}  // namespace

Vector RegressionResult::predict(const Matrix& x) const {
  return (x * coefficients).array() + intercept;
}

double r_squared(const Vector& y, const Vector& pred) {
  const double m = y.mean();
  const double ss_tot = (y.array() - m).square().sum();
  const double ss_res = (y - pred).squaredNorm();
  if (!(ss_tot > 0.0)) return ss_res <= 1e-24 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

RegressionResult ols_fit(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) throw InvalidArgument("design rows must equal target length");
  if (x.rows() < 2) throw InvalidArgument("need at least two rows");
  if (!x.allFinite() || !y.allFinite()) throw InvalidArgument("regression inputs must be finite");

  const Matrix a = with_intercept(x);
  const Eigen::Index p = a.cols();
  RegressionResult r;

  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  Vector beta;
  Matrix gram = a.transpose() * a;
  if (qr.rank() < p) {
    r.ridge_fallback = true;
    Matrix reg = gram;
    reg.diagonal().tail(p - 1).array() += kRidgeFallback;
    beta = reg.ldlt().solve(a.transpose() * y);
    gram = std::move(reg);
  } else {
    beta = qr.solve(y);
  }

  r.intercept = beta(0);
  r.coefficients = beta.tail(p - 1);
  const Vector fitted = a * beta;
  r.r2_train = r_squared(y, fitted);
  r.r2_test = std::numeric_limits<double>::quiet_NaN();

  const double dof = static_cast<double>(a.rows() - p);
  r.p_values = Vector::Constant(p - 1, std::numeric_limits<double>::quiet_NaN());
  r.intercept_p_value = std::numeric_limits<double>::quiet_NaN();
  if (dof > 0) {
    const double sigma2 = (y - fitted).squaredNorm() / dof;
    const Matrix cov = sigma2 * gram.ldlt().solve(Matrix::Identity(p, p));
    auto p_of = [&](Eigen::Index j) {
      const double se = std::sqrt(std::max(cov(j, j), 0.0));
      if (!(se > 0.0)) return beta(j) == 0.0 ? 1.0 : 0.0;
      return student_t_two_sided(beta(j) / se, dof);
    };
    r.intercept_p_value = p_of(0);
    for (Eigen::Index j = 1; j < p; ++j) r.p_values(j - 1) = p_of(j);
  }
  return r;
}

Split bootstrap_split(int n, double train_frac, std::uint64_t seed, int replicate) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw InvalidArgument("train_frac must lie in (0,1)");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(replicate)));
  std::shuffle(perm.begin(), perm.end(), rng);
  const int n_train = std::clamp(static_cast<int>(std::lround(train_frac * n)), 1, n - 1);
  Split s;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.test.assign(perm.begin() + n_train, perm.end());
  return s;
}

BootstrapSummary ols_bootstrap(const Matrix& x, const Vector& y, int n_boot, double train_frac, std::uint64_t seed) {
  if (x.rows() <= x.cols() + 1) throw InvalidArgument("ols_bootstrap needs rows > cols + 1");
  if (n_boot < 1) throw InvalidArgument("n_boot must be positive");
  BootstrapSummary s;
  s.n_boot = n_boot;
  std::vector<double> test_r2(static_cast<std::size_t>(n_boot));
  std::vector<double> train_r2(static_cast<std::size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    const Split split = bootstrap_split(static_cast<int>(x.rows()), train_frac, seed, b);
    Vector y_train(static_cast<Eigen::Index>(split.train.size()));
    Vector y_test(static_cast<Eigen::Index>(split.test.size()));
    for (std::size_t i = 0; i < split.train.size(); ++i) y_train(static_cast<Eigen::Index>(i)) = y(split.train[i]);
    for (std::size_t i = 0; i < split.test.size(); ++i) y_test(static_cast<Eigen::Index>(i)) = y(split.test[i]);
    const RegressionResult fit = ols_fit(take_rows(x, split.train), y_train);
    s.ridge_fallbacks += fit.ridge_fallback;
    train_r2[static_cast<std::size_t>(b)] = fit.r2_train;
    test_r2[static_cast<std::size_t>(b)] = r_squared(y_test, fit.predict(take_rows(x, split.test)));
  }
  s.mean_r2_test = mean(test_r2);
  s.std_r2_test = stddev(test_r2);
  s.mean_r2_train = mean(train_r2);
  s.full = ols_fit(x, y);
  s.full.r2_test = s.mean_r2_test;
  return s;
}

}  // namespace ctxlab::num
