#include "ctxlab/numerics/logistic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ctxlab::num {

namespace {

void check_inputs(const Matrix& x, const Labels& labels, int n_classes) {
  if (n_classes < 2) throw InvalidArgument("need at least two classes");
  if (x.rows() != static_cast<Eigen::Index>(labels.size())) throw InvalidArgument("row count must equal label count");
  if (x.rows() == 0) throw InvalidArgument("empty training set");
  for (int l : labels)
    if (l < 0 || l >= n_classes) throw InvalidArgument("label out of range");
}

// Row-wise softmax of `scores`; returns per-row log-normalizers.
Vector softmax_inplace(Matrix& scores) {
  Vector lse(scores.rows());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    scores.row(i) = (scores.row(i).array() - m).exp();
    const double s = scores.row(i).sum();
    scores.row(i) /= s;
    lse(i) = m + std::log(s);
  }
  return lse;
}

}  // namespace

Matrix LinearClassifier::scores(const Matrix& x) const {
  return (x * weights.transpose()).rowwise() + bias.transpose();
}

Labels LinearClassifier::predict(const Matrix& x) const {
  const Matrix s = scores(x);
  Labels out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < s.cols(); ++k)
      if (s(i, k) > s(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double LinearClassifier::accuracy(const Matrix& x, const Labels& labels) const {
  if (labels.empty()) return 0.0;
  const Labels p = predict(x);
  int hit = 0;
  for (std::size_t i = 0; i < p.size(); ++i) hit += p[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

double logistic_objective(const Matrix& x, const Labels& labels, const Matrix& weights, const Vector& bias, double l2,
                          Matrix* grad_w, Vector* grad_b) {
  const auto n = static_cast<double>(x.rows());
  Matrix p = (x * weights.transpose()).rowwise() + bias.transpose();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) loss -= p(i, labels[static_cast<std::size_t>(i)]);
  const Vector lse = softmax_inplace(p);
  loss = (loss + lse.sum()) / n + 0.5 * l2 * weights.squaredNorm();
  if (grad_w || grad_b) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) p(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
    if (grad_w) *grad_w = p.transpose() * x / n + l2 * weights;
    if (grad_b) *grad_b = p.colwise().sum().transpose() / n;
  }
  return loss;
}

LinearClassifier logistic_fit(const Matrix& x, const Labels& labels, int n_classes, const LogisticOptions& opt) {
  check_inputs(x, labels, n_classes);
  if (!(opt.l2 >= 0.0)) throw InvalidArgument("l2 must be nonnegative");
  if (!x.allFinite()) throw InvalidArgument("logistic_fit input must be finite");

  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  const Eigen::Index kc = n_classes;
  const Eigen::Index block = d + 1;
  const Eigen::Index dim = kc * block;

  Matrix xa(n, block);
  xa.leftCols(d) = x;
  xa.col(d).setOnes();

  LinearClassifier clf;
  clf.weights = Matrix::Zero(kc, d);
  clf.bias = Vector::Zero(kc);

  Matrix gw;
  Vector gb;
  double f = logistic_objective(x, labels, clf.weights, clf.bias, opt.l2, &gw, &gb);

  for (int it = 0;; ++it) {
    clf.iterations = it;
    clf.gradient_norm = std::max(gw.cwiseAbs().maxCoeff(), gb.cwiseAbs().maxCoeff());
    if (clf.gradient_norm < opt.tolerance) {
      clf.converged = true;
      break;
    }
    if (it >= opt.max_iterations) break;

    // Gradient and Hessian over theta = [W | b], flattened class-major.
    Vector g(dim);
    for (Eigen::Index k = 0; k < kc; ++k) {
      g.segment(k * block, d) = gw.row(k).transpose();
      g(k * block + d) = gb(k);
    }
    Matrix p = (x * clf.weights.transpose()).rowwise() + clf.bias.transpose();
    softmax_inplace(p);
    Matrix h = Matrix::Zero(dim, dim);
    for (Eigen::Index k = 0; k < kc; ++k) {
      for (Eigen::Index l = k; l < kc; ++l) {
        Vector w = -p.col(k).cwiseProduct(p.col(l));
        if (k == l) w += p.col(k);
        const Matrix hb = xa.transpose() * w.asDiagonal() * xa / static_cast<double>(n);
        h.block(k * block, l * block, block, block) = hb;
        if (l != k) h.block(l * block, k * block, block, block) = hb.transpose();
      }
      for (Eigen::Index j = 0; j < d; ++j) h(k * block + j, k * block + j) += opt.l2;
    }
    const double damping = 1e-10 * std::max(1.0, h.diagonal().maxCoeff());
    h.diagonal().array() += damping;
    Vector step = -h.ldlt().solve(g);
    double slope = g.dot(step);
    if (!step.allFinite() || !(slope < 0.0)) {
      step = -g;
      slope = -g.squaredNorm();
    }

    double t = 1.0;
    Matrix w_new;
    Vector b_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      w_new = clf.weights;
      b_new = clf.bias;
      for (Eigen::Index k = 0; k < kc; ++k) {
        w_new.row(k) += t * step.segment(k * block, d).transpose();
        b_new(k) += t * step(k * block + d);
      }
      f_new = logistic_objective(x, labels, w_new, b_new, opt.l2);
      if (f_new <= f + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // no further decrease representable
    clf.weights = std::move(w_new);
    clf.bias = std::move(b_new);
    f = logistic_objective(x, labels, clf.weights, clf.bias, opt.l2, &gw, &gb);
  }
  return clf;
}

std::vector<std::vector<int>> kfold_indices(int n, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("k must be at least 2");
  if (n < k) throw InvalidArgument("fewer samples than folds");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::vector<int>> folds(static_cast<std::size_t>(k));
  int start = 0;
  for (int f = 0; f < k; ++f) {
    const int len = n / k + (f < n % k ? 1 : 0);
    folds[static_cast<std::size_t>(f)].assign(perm.begin() + start, perm.begin() + start + len);
    start += len;
  }
  return folds;
}

double kfold_cv_accuracy(const Matrix& x, const Labels& labels, int n_classes, int k, double l2, std::uint64_t seed) {
  check_inputs(x, labels, n_classes);
  const auto folds = kfold_indices(static_cast<int>(x.rows()), k, seed);
  LogisticOptions opt;
  opt.l2 = l2;
  double acc = 0.0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<int> train;
    for (std::size_t g = 0; g < folds.size(); ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    const auto clf = logistic_fit(take_rows(x, train), take(labels, train), n_classes, opt);
    acc += clf.accuracy(take_rows(x, folds[f]), take(labels, folds[f]));
  }
  return acc / static_cast<double>(folds.size());
}

}  // namespace ctxlab::num
