#include "ctxlab/numerics/pca.hpp"

#include <algorithm>
#include <cmath>

namespace ctxlab::num {

PcaResult pca(const Matrix& x) {
  if (x.rows() < 2) throw InvalidArgument("pca needs at least two rows");
  if (!x.allFinite()) throw InvalidArgument("pca input must be finite");

  PcaResult r;
  r.mean = x.colwise().mean().transpose();
  const Matrix centered = x.rowwise() - r.mean.transpose();
  const Eigen::Index k = std::min<Eigen::Index>(x.rows() - 1, x.cols());

  Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const Matrix& v = svd.matrixV();

  r.components.resize(k, x.cols());
  r.explained_variance.resize(k);
  const double denom = static_cast<double>(x.rows() - 1);
  for (Eigen::Index i = 0; i < k; ++i) {
    Vector axis = v.col(i);
    Eigen::Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    r.components.row(i) = axis.transpose();
    r.explained_variance(i) = sv(i) * sv(i) / denom;
  }

  const double total = centered.squaredNorm() / denom;
  r.degenerate = !(total > 0.0) || r.explained_variance.sum() <= 1e-300;
  if (r.degenerate) {
    r.explained_ratio = Vector::Zero(k);
  } else {
    r.explained_ratio = r.explained_variance / total;
  }
  return r;
}

Subspace top_k_for_variance(const PcaResult& p, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw InvalidArgument("threshold must lie in (0,1]");
  if (p.size() == 0) throw InvalidArgument("empty PCA result");
  Subspace s;
  if (p.degenerate) {
    s.basis = p.components.topRows(1);
    s.ratios = p.explained_ratio.head(1);
    s.warning = true;
    return s;
  }
  int k = 0;
  double cum = 0.0;
  while (k < p.size()) {
    cum += p.explained_ratio(k);
    ++k;
    if (cum >= threshold - 1e-12) break;
  }
  s.basis = p.components.topRows(k);
  s.ratios = p.explained_ratio.head(k);
  return s;
}

}  // namespace ctxlab::num
