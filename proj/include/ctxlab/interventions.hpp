#pragma once

// Representation interventions on the final hidden layer: a rotation that
// moves the class-center subspace onto the dominant within-class directions,
// and a subspace boost followed by retraining an L2-regularized linear head.

#include "ctxlab/common.hpp"
#include "ctxlab/metrics.hpp"
#include "ctxlab/mlp.hpp"
#include "ctxlab/numerics/stats.hpp"
#include "ctxlab/synthenv.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace ctxlab::interv {

// --- rotation -------------------------------------------------------------

struct RotationPlan {
  Matrix u_inter;    ///< inter-class PCs (rows) of the class centers
  Matrix u_intra;    ///< top n_classes intra-class PCs (rows)
  Matrix transform;  ///< hidden_dim x hidden_dim
  Vector origin;     ///< mean of the class centers
  int paired = 0;    ///< number of inter-class axes mapped
  bool literal = false;
};

/// Paired mapping of inter-class PC j onto intra-class PC j. By default the
/// map is completed to a rotation that is the identity on the orthogonal
/// complement of the paired directions; `literal` keeps the raw rank-deficient
/// product u_intra^T u_inter instead.
/// Throws InvalidArgument for fewer than two classes or fewer than two
/// samples per class, and DegenerateError when there are fewer intra-class PCs
/// than classes or the class centers coincide.
RotationPlan build_rotation(const Matrix& reps, const Labels& class_of, bool literal = false);

RotationPlan identity_rotation(int dim);

/// reps * transform^T
Matrix apply_rotation(const RotationPlan& plan, const Matrix& reps);

/// Applies the transform to the class-center component only: the projection
/// of (x - origin) onto the paired inter-class axes is replaced by its image
/// under the transform, and everything orthogonal to those axes is kept.
Matrix apply_center_rotation(const RotationPlan& plan, const Matrix& reps);

// --- boost ----------------------------------------------------------------

enum class Target { foreground, background };

struct BoostPlan {
  Vector importance;  ///< nonnegative, mean 1
  double g = 1.0;
  Target target = Target::foreground;

  /// Per-feature scale g^(e_i / max e): features fully inside the subspace are
  /// scaled by g, features outside it are left alone.
  Vector weights() const;
  /// Uniform scale of the control: the mean of weights(), which is g when e is uniform.
  double control_scale() const;
};

/// e_i = sum_j |U[j,i]| sqrt(r_j) over all PCs of `means`, normalized to mean 1.
Vector subspace_importance(const Matrix& means);

/// Throws InvalidArgument when g <= 0 and DegenerateError when `means` has no variance.
BoostPlan build_boost(const Matrix& means, Target target, double g);

struct EvalSet {
  Matrix reps;
  Labels labels;
};

struct BoostAccuracy {
  double boosted = 0.0;
  double control = 0.0;
  double delta() const { return boosted - control; }
};

/// Fits an L2-regularized multinomial head on each of `folds` training
/// splits of (fit_reps, fit_labels), once on the boosted features and once on
/// the control scaled uniformly by control_scale(). Returns, per evaluation set, the accuracy
/// averaged over the fold models, followed by one extra entry holding the
/// plain k-fold CV accuracy on the held-out folds.
std::vector<BoostAccuracy> apply_boost_and_retrain(const BoostPlan& plan, const Matrix& fit_reps, const Labels& fit_labels,
                                                   const std::vector<EvalSet>& eval, double l2, int folds,
                                                   std::uint64_t seed);

/// Default boost-factor sweep.
std::vector<double> boost_grid();

// --- studies --------------------------------------------------------------

enum class Intervention { rotation, boost_fg, boost_bg };
std::string to_string(Intervention which);
Intervention parse_intervention(const std::string& s);

struct StudyModel {
  std::string id;
  synth::EnvironmentSpec spec;  ///< training environment
  mlp::MlpModel model;
};

struct StudyConfig {
  double g = 1.0 / 64.0;
  double l2 = 1.0;
  int folds = 5;
  int n_eval = 1000;       ///< samples in each generated ID/OOD evaluation set
  int n_rotation = 2000;   ///< samples used to estimate class centers and intra-class PCs
  bool literal_rotation = false;
  metrics::MetricConfig metrics;
  std::uint64_t seed = 0;
  int threads = 0;
};

struct StudyRow {
  std::string model_id;
  std::string intervention;
  double g = 0.0;
  std::string metric;
  double pre = 0.0;
  double post = 0.0;
  double delta() const { return post - pre; }
};

struct TTestRow {
  std::string intervention;
  double g = 0.0;
  std::string quantity;
  num::TTest test;
  bool degenerate = false;
};

struct StudyResult {
  std::vector<StudyRow> rows;
  std::vector<TTestRow> ttests;

  /// Post - pre per model for one quantity, in model order.
  std::vector<double> deltas(const std::string& metric) const;
};

/// Per-model pre/post quantities and paired t-tests of post against pre.
/// Rotation (applied to the class-center component) reports geom_3, rsa_3 and
/// the task-head accuracies on ID, OOD1 and OOD2; boosts report retrained-head accuracies (pre = control, post = boosted).
StudyResult run_intervention_study(const std::vector<StudyModel>& models, Intervention which, const StudyConfig& cfg);

/// `model_id,intervention,g,metric,pre,post,delta`
void write_study_csv(std::ostream& out, const std::vector<StudyRow>& rows);
std::vector<StudyRow> read_study_csv(std::istream& in);
/// `intervention,quantity,t,p,n`
void write_ttest_csv(std::ostream& out, const std::vector<TTestRow>& rows);

}  // namespace ctxlab::interv
