#include "ctxlab/interventions.hpp"

#include "ctxlab/numerics/logistic.hpp"
#include "ctxlab/numerics/pca.hpp"
#include "ctxlab/parallel.hpp"
#include "ctxlab/textio.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>

namespace ctxlab::interv {

namespace {

constexpr double kRankTol = 1e-10;
constexpr double kVarianceTol = 1e-12;

// Rows of p.components whose variance is not negligible.
Matrix informative_axes(const num::PcaResult& p) {
  if (p.degenerate) return Matrix(0, p.mean.size());
  const double top = p.explained_variance.size() ? p.explained_variance(0) : 0.0;
  Eigen::Index k = 0;
  while (k < p.explained_variance.size() && p.explained_variance(k) > kVarianceTol * std::max(1.0, top)) ++k;
  return p.components.topRows(k);
}

// Orthonormal basis (columns) for the orthogonal complement of the
// orthonormal columns of `a` inside R^p.
Matrix complement(const Matrix& a) {
  const Eigen::Index p = a.rows();
  const Eigen::Index m = a.cols();
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix full = qr.householderQ() * Matrix::Identity(p, p);
  return full.rightCols(p - m);
}

// Rotation that maps the orthonormal columns of A onto those of B, is the
// identity outside span([A B]), and otherwise stays as close to the identity
// as the pairing allows.
Matrix extended_rotation(const Matrix& a, const Matrix& b) {
  const Eigen::Index d = a.rows();
  Matrix joint(d, a.cols() + b.cols());
  joint << a, b;
  Eigen::JacobiSVD<Matrix> svd(joint, Eigen::ComputeThinU);
  const Vector& s = svd.singularValues();
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > kRankTol * std::max(1.0, s(0))) ++rank;
  const Matrix q = svd.matrixU().leftCols(rank);

  const Matrix a_local = q.transpose() * a;
  const Matrix b_local = q.transpose() * b;
  Matrix r_local = b_local * a_local.transpose();
  if (rank > a.cols()) {
    const Matrix a_perp = complement(a_local);
    const Matrix b_perp = complement(b_local);
    Eigen::JacobiSVD<Matrix> align(b_perp.transpose() * a_perp, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Matrix p = align.matrixU() * align.matrixV().transpose();
    r_local += b_perp * p * a_perp.transpose();
  }
  return Matrix::Identity(d, d) - q * q.transpose() + q * r_local * q.transpose();
}

Matrix task_logits(const mlp::MlpModel& m, const Matrix& h3) {
  return (h3 * m.task_w.transpose()).rowwise() + m.task_b.transpose();
}

}  // namespace

RotationPlan build_rotation(const Matrix& reps, const Labels& class_of, bool literal) {
  if (reps.rows() != static_cast<Eigen::Index>(class_of.size())) throw InvalidArgument("one class label per row required");
  if (class_of.empty()) throw InvalidArgument("no representations");
  const int n_classes = *std::max_element(class_of.begin(), class_of.end()) + 1;
  if (n_classes < 2) throw InvalidArgument("rotation needs at least two classes");

  const Eigen::Index d = reps.cols();
  Matrix centers = Matrix::Zero(n_classes, d);
  std::vector<int> counts(static_cast<std::size_t>(n_classes), 0);
  for (Eigen::Index i = 0; i < reps.rows(); ++i) {
    const int c = class_of[static_cast<std::size_t>(i)];
    if (c < 0) throw InvalidArgument("class labels must be nonnegative");
    centers.row(c) += reps.row(i);
    ++counts[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < n_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] < 2) throw InvalidArgument("each class needs at least two samples");
    centers.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  Matrix centered = reps;
  for (Eigen::Index i = 0; i < reps.rows(); ++i) centered.row(i) -= centers.row(class_of[static_cast<std::size_t>(i)]);

  RotationPlan plan;
  plan.literal = literal;
  plan.u_inter = informative_axes(num::pca(centers));
  if (plan.u_inter.rows() == 0) throw DegenerateError("class centers coincide");
  const Matrix intra = informative_axes(num::pca(centered));
  if (intra.rows() < n_classes) throw DegenerateError("fewer intra-class PCs than classes");
  plan.u_intra = intra.topRows(n_classes);

  const Eigen::Index m = std::min<Eigen::Index>(plan.u_inter.rows(), n_classes);
  Matrix a = plan.u_inter.topRows(m).transpose();
  Matrix b = plan.u_intra.topRows(m).transpose();
  // Pair each axis with the intra-class axis orientation closest to it.
  for (Eigen::Index j = 0; j < m; ++j)
    if (a.col(j).dot(b.col(j)) < 0.0) b.col(j) = -b.col(j);

  plan.transform = literal ? Matrix(b * a.transpose()) : extended_rotation(a, b);
  plan.origin = centers.colwise().mean().transpose();
  plan.paired = static_cast<int>(m);
  return plan;
}

RotationPlan identity_rotation(int dim) {
  RotationPlan plan;
  plan.u_inter = Matrix(0, dim);
  plan.u_intra = Matrix(0, dim);
  plan.transform = Matrix::Identity(dim, dim);
  plan.origin = Vector::Zero(dim);
  return plan;
}

Matrix apply_rotation(const RotationPlan& plan, const Matrix& reps) {
  if (reps.cols() != plan.transform.cols()) throw InvalidArgument("representation width does not match the plan");
  return reps * plan.transform.transpose();
}

Matrix apply_center_rotation(const RotationPlan& plan, const Matrix& reps) {
  const Eigen::Index d = plan.transform.cols();
  if (reps.cols() != d) throw InvalidArgument("representation width does not match the plan");
  const Matrix a = plan.u_inter.topRows(plan.paired);
  // x + (T - I) P (x - origin) with P the projector onto the paired axes.
  const Matrix shift = a.transpose() * a * (plan.transform - Matrix::Identity(d, d)).transpose();
  const Matrix centered = reps.rowwise() - plan.origin.transpose();
  return reps + centered * shift;
}

// ---------------------------------------------------------------------------

Vector BoostPlan::weights() const {
  const double top = importance.maxCoeff();
  Vector w(importance.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = std::pow(g, importance(i) / top);
  return w;
}

double BoostPlan::control_scale() const { return weights().mean(); }

Vector subspace_importance(const Matrix& means) {
  const num::PcaResult p = num::pca(means);
  if (p.degenerate) throw DegenerateError("subspace PCA is degenerate");
  Vector e = Vector::Zero(means.cols());
  for (Eigen::Index j = 0; j < p.components.rows(); ++j)
    e += p.components.row(j).transpose().cwiseAbs() * std::sqrt(std::max(p.explained_ratio(j), 0.0));
  return e / e.mean();
}

BoostPlan build_boost(const Matrix& means, Target target, double g) {
  if (!(g > 0.0) || !std::isfinite(g)) throw InvalidArgument("boost factor must be positive");
  BoostPlan plan;
  plan.importance = subspace_importance(means);
  plan.g = g;
  plan.target = target;
  return plan;
}

std::vector<BoostAccuracy> apply_boost_and_retrain(const BoostPlan& plan, const Matrix& fit_reps, const Labels& fit_labels,
                                                   const std::vector<EvalSet>& eval, double l2, int folds,
                                                   std::uint64_t seed) {
  if (plan.importance.size() != fit_reps.cols()) throw InvalidArgument("plan width does not match representations");
  const int n_classes = *std::max_element(fit_labels.begin(), fit_labels.end()) + 1;
  const Vector w = plan.weights();
  const auto boosted = [&](const Matrix& x) -> Matrix { return x * w.asDiagonal(); };
  const double scale = plan.control_scale();
  const auto control = [&](const Matrix& x) -> Matrix { return x * scale; };

  std::vector<BoostAccuracy> acc(eval.size() + 1);
  const auto split = num::kfold_indices(static_cast<int>(fit_reps.rows()), folds, seed);
  num::LogisticOptions opt;
  opt.l2 = l2;
  const Matrix fit_b = boosted(fit_reps);
  const Matrix fit_c = control(fit_reps);
  std::vector<Matrix> eval_b, eval_c;
  for (const auto& e : eval) {
    eval_b.push_back(boosted(e.reps));
    eval_c.push_back(control(e.reps));
  }

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train;
    for (int other = 0; other < folds; ++other)
      if (other != f)
        train.insert(train.end(), split[static_cast<std::size_t>(other)].begin(), split[static_cast<std::size_t>(other)].end());
    const auto& held = split[static_cast<std::size_t>(f)];
    const Labels y_train = take(fit_labels, train);
    const auto head_b = num::logistic_fit(take_rows(fit_b, train), y_train, n_classes, opt);
    const auto head_c = num::logistic_fit(take_rows(fit_c, train), y_train, n_classes, opt);
    for (std::size_t k = 0; k < eval.size(); ++k) {
      acc[k].boosted += head_b.accuracy(eval_b[k], eval[k].labels);
      acc[k].control += head_c.accuracy(eval_c[k], eval[k].labels);
    }
    const Labels y_held = take(fit_labels, held);
    acc.back().boosted += head_b.accuracy(take_rows(fit_b, held), y_held) * static_cast<double>(held.size());
    acc.back().control += head_c.accuracy(take_rows(fit_c, held), y_held) * static_cast<double>(held.size());
  }
  for (std::size_t k = 0; k < eval.size(); ++k) {
    acc[k].boosted /= folds;
    acc[k].control /= folds;
  }
  acc.back().boosted /= static_cast<double>(fit_reps.rows());
  acc.back().control /= static_cast<double>(fit_reps.rows());
  return acc;
}

std::vector<double> boost_grid() { return {1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0, 4.0, 16.0, 64.0}; }

// ---------------------------------------------------------------------------

std::string to_string(Intervention which) {
  switch (which) {
    case Intervention::rotation: return "rotation";
    case Intervention::boost_fg: return "boost_fg";
    case Intervention::boost_bg: return "boost_bg";
  }
  return "?";
}

Intervention parse_intervention(const std::string& s) {
  if (s == "rotation") return Intervention::rotation;
  if (s == "boost_fg") return Intervention::boost_fg;
  if (s == "boost_bg") return Intervention::boost_bg;
  throw InvalidArgument("unknown intervention '" + s + "'");
}

std::vector<double> StudyResult::deltas(const std::string& metric) const {
  std::vector<double> d;
  for (const auto& r : rows)
    if (r.metric == metric) d.push_back(r.delta());
  return d;
}

namespace {

enum : std::uint64_t { kSeedId = 1, kSeedOod1, kSeedOod2, kSeedRotation, kSeedMeans, kSeedFolds, kSeedMetrics };

struct EvalData {
  synth::Dataset id, ood1, ood2;
};

EvalData eval_data(const StudyModel& sm, const StudyConfig& cfg, std::uint64_t model_seed) {
  synth::EnvironmentSpec id = sm.spec;
  id.n_samples = cfg.n_eval;
  id.seed = derive_seed(model_seed, kSeedId);
  synth::EnvironmentSpec o1 = synth::make_ood1(id);
  o1.seed = derive_seed(model_seed, kSeedOod1);
  synth::EnvironmentSpec o2 = synth::make_ood2(id);
  o2.seed = derive_seed(model_seed, kSeedOod2);
  return {synth::generate(id), synth::generate(o1), synth::generate(o2)};
}

std::vector<StudyRow> rotation_rows(const StudyModel& sm, const StudyConfig& cfg, std::uint64_t model_seed) {
  const mlp::MlpModel& m = sm.model;
  const EvalData data = eval_data(sm, cfg, model_seed);

  synth::EnvironmentSpec mixed = sm.spec;
  mixed.p_co = 0.5;
  mixed.n_samples = cfg.n_rotation;
  mixed.seed = derive_seed(model_seed, kSeedRotation);
  const synth::Dataset rot_data = synth::generate(mixed);
  const RotationPlan plan = build_rotation(mlp::layer_output(m, rot_data.x, 3), rot_data.z_c, cfg.literal_rotation);

  metrics::MetricConfig mc = cfg.metrics;
  mc.seed = derive_seed(model_seed, kSeedMetrics);
  const auto anchored = metrics::anchored_inputs(sm.spec, synth::Block::spurious, mc.n_anchor, mc.n_perturb, mc.seed);
  const Matrix geom_pre = mlp::layer_output(m, anchored.x, 3);
  const Matrix geom_post = apply_center_rotation(plan, geom_pre);

  const auto probe = metrics::block_only_probe_set(data.id);
  const auto keep = metrics::capped_subsample(probe.label, mc.rsa_cap, mc.seed);
  const Matrix ref = metrics::reference_rdm(take(probe.label, keep));
  const Matrix rsa_pre = mlp::layer_output(m, take_rows(probe.x, keep), 3);

  std::vector<StudyRow> rows;
  auto add = [&](const char* metric, double pre, double post) {
    rows.push_back({sm.id, "rotation", 0.0, metric, pre, post});
  };
  add("geom_3", metrics::geometric_factorization(geom_pre, anchored.n_anchor, anchored.n_perturb, mc.subspace_threshold),
      metrics::geometric_factorization(geom_post, anchored.n_anchor, anchored.n_perturb, mc.subspace_threshold));
  add("rsa_3", metrics::rdm_correlation(metrics::euclidean_rdm(rsa_pre), ref),
      metrics::rdm_correlation(metrics::euclidean_rdm(apply_center_rotation(plan, rsa_pre)), ref));
  const std::pair<const char*, const synth::Dataset*> sets[] = {
      {"id_acc", &data.id}, {"ood1_acc", &data.ood1}, {"ood2_acc", &data.ood2}};
  for (const auto& [name, ds] : sets) {
    const Matrix h3 = mlp::layer_output(m, ds->x, 3);
    add(name, mlp::accuracy_from_logits(task_logits(m, h3), ds->y),
        mlp::accuracy_from_logits(task_logits(m, apply_center_rotation(plan, h3)), ds->y));
  }
  return rows;
}

Matrix class_means(const Matrix& rows, const Labels& cls) {
  const int k = *std::max_element(cls.begin(), cls.end()) + 1;
  Matrix means = Matrix::Zero(k, rows.cols());
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    means.row(cls[i]) += rows.row(i);
    ++count[cls[i]];
  }
  for (int c = 0; c < k; ++c) {
    if (count[c] == 0) throw DegenerateError("a class has no anchors");
    means.row(c) /= count[c];
  }
  return means;
}

std::vector<StudyRow> boost_rows(const StudyModel& sm, Intervention which, const StudyConfig& cfg,
                                 std::uint64_t model_seed) {
  const mlp::MlpModel& m = sm.model;
  const EvalData data = eval_data(sm, cfg, model_seed);
  const Target target = which == Intervention::boost_fg ? Target::foreground : Target::background;
  const synth::Block anchor = target == Target::foreground ? synth::Block::causal : synth::Block::spurious;

  // Per-class mean representation of the target factor, averaged over
  // random pairings with the other factor.
  const auto anchored = metrics::anchored_inputs(sm.spec, anchor, cfg.metrics.n_anchor, cfg.metrics.n_perturb,
                                                 derive_seed(model_seed, kSeedMeans));
  const Matrix per_anchor =
      metrics::anchor_means(mlp::layer_output(m, anchored.x, 3), anchored.n_anchor, anchored.n_perturb);
  const BoostPlan plan = build_boost(class_means(per_anchor, anchored.anchor_class), target, cfg.g);

  const std::vector<EvalSet> eval = {{mlp::layer_output(m, data.ood1.x, 3), data.ood1.y},
                                     {mlp::layer_output(m, data.ood2.x, 3), data.ood2.y}};
  const auto acc = apply_boost_and_retrain(plan, mlp::layer_output(m, data.id.x, 3), data.id.y, eval, cfg.l2, cfg.folds,
                                           derive_seed(model_seed, kSeedFolds));
  const std::string name = to_string(which);
  return {{sm.id, name, cfg.g, "id_acc", acc[2].control, acc[2].boosted},
          {sm.id, name, cfg.g, "ood1_acc", acc[0].control, acc[0].boosted},
          {sm.id, name, cfg.g, "ood2_acc", acc[1].control, acc[1].boosted}};
}

}  // namespace

StudyResult run_intervention_study(const std::vector<StudyModel>& models, Intervention which, const StudyConfig& cfg) {
  if (models.size() < 2) throw InvalidArgument("an intervention study needs at least two models");
  if (!(cfg.g > 0.0)) throw InvalidArgument("boost factor must be positive");
  std::vector<std::vector<StudyRow>> per_model(models.size());
  parallel_for(models.size(), cfg.threads, [&](std::size_t i) {
    const std::uint64_t model_seed = derive_seed(cfg.seed, i);
    try {
      per_model[i] = which == Intervention::rotation ? rotation_rows(models[i], cfg, model_seed)
                                                     : boost_rows(models[i], which, cfg, model_seed);
    } catch (const DegenerateError&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      per_model[i] = {{models[i].id, to_string(which), which == Intervention::rotation ? 0.0 : cfg.g, "failed", nan, nan}};
    }
  });

  StudyResult result;
  for (auto& rows : per_model) result.rows.insert(result.rows.end(), rows.begin(), rows.end());

  std::vector<std::string> quantities;
  for (const auto& r : result.rows)
    if (r.metric != "failed" && std::find(quantities.begin(), quantities.end(), r.metric) == quantities.end())
      quantities.push_back(r.metric);
  for (const auto& q : quantities) {
    std::vector<double> pre, post;
    for (const auto& r : result.rows)
      if (r.metric == q) {
        pre.push_back(r.pre);
        post.push_back(r.post);
      }
    TTestRow t;
    t.intervention = to_string(which);
    t.g = which == Intervention::rotation ? 0.0 : cfg.g;
    t.quantity = q;
    try {
      t.test = num::paired_ttest(post, pre);
    } catch (const DegenerateError&) {
      t.degenerate = true;
      t.test.t = std::numeric_limits<double>::quiet_NaN();
      t.test.p_value = std::numeric_limits<double>::quiet_NaN();
      t.test.n = static_cast<int>(pre.size());
      t.test.mean_difference = num::mean(post) - num::mean(pre);
    }
    result.ttests.push_back(t);
  }
  return result;
}

// ---------------------------------------------------------------------------

void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows) {
  out << "model_id,intervention,g,metric,pre,post,delta\n";
  for (const auto& r : rows)
    out << r.model_id << ',' << r.intervention << ',' << text::num(r.g) << ',' << r.metric << ',' << text::num(r.pre) << ','
        << text::num(r.post) << ',' << text::num(r.delta()) << '\n';
}

std::vector<StudyRow> read_study_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != "model_id,intervention,g,metric,pre,post,delta")
    throw IoError("unexpected study header");
  std::vector<StudyRow> rows;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const auto c = text::split(text::trim(line), ',');
    if (c.size() != 7) throw IoError("study row must have 7 columns");
    rows.push_back({c[0], c[1], text::to_double(c[2]), c[3], text::to_double(c[4]), text::to_double(c[5])});
  }
  return rows;
}

void write_ttest_csv(std::ostream& out, const std::vector<TTestRow>& rows) {
  out << "intervention,quantity,t,p,n\n";
  for (const auto& r : rows) {
    std::string label = r.intervention;
    if (r.intervention != "rotation") label += "@" + text::num(r.g);
    out << label << ',' << r.quantity << ',' << text::num(r.test.t) << ',' << text::num(r.test.p_value) << ',' << r.test.n
        << '\n';
  }
}

}  // namespace ctxlab::interv
