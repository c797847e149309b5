#pragma once

// Factorization and feature-weighting metrics over hidden representations.
//
// Factorization (per hidden layer): linear-probe accuracy on block-only inputs,
// RSA correlation against a (block, class) reference RDM, and geometric
// factorization 1 - var_fg|bg / var_fg. Feature weighting: FBPS = delta_fg -
// delta_bg, with L2 distance on hidden layers and KL divergence on the output.

#include "ctxlab/common.hpp"
#include "ctxlab/mlp.hpp"
#include "ctxlab/synthenv.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>

namespace ctxlab::metrics {

/// Maps a batch of inputs (rows) to a batch of representations (rows).
using RepresentationFn = std::function<Matrix(const Matrix&)>;

/// Representation function for hidden layer 1..3, or the task-head
/// probabilities for layer 4.
RepresentationFn layer_fn(const mlp::MlpModel& m, int layer);

struct MetricConfig {
  int probe_folds = 5;
  double probe_l2 = 1e-3;
  int rsa_cap = 200;          ///< max items per (block, class) group
  int n_anchor = 200;
  int n_perturb = 50;
  double subspace_threshold = 0.99;
  int fbps_samples = 5000;
  std::uint64_t seed = 0;
};

struct MetricValue {
  double value = 0.0;
  bool degenerate = false;
};

// --- linear probe ---------------------------------------------------------

/// Causal-only and spurious-only copies of `ds` stacked (causal first) with
/// their 2n-way probe labels.
struct ProbeSet {
  Matrix x;
  Labels label;
};
ProbeSet block_only_probe_set(const synth::Dataset& ds);

/// k-fold CV accuracy of a multinomial probe over the 2n block/class labels.
/// All-zero representations return chance (1/2n) with the degenerate flag.
MetricValue probe_accuracy(const Matrix& reps, const Labels& label, const MetricConfig& cfg);
MetricValue probe_factorization(const RepresentationFn& f, const synth::Dataset& ds, const MetricConfig& cfg);

// --- RSA --------------------------------------------------------------------

/// Pairwise Euclidean distances between rows.
Matrix euclidean_rdm(const Matrix& reps);
/// 0 where two items share a group label, 1 otherwise.
Matrix reference_rdm(const Labels& group);
/// Pearson r between the strict upper triangles of two RDMs.
double rdm_correlation(const Matrix& model_rdm, const Matrix& reference);

/// Deterministic subsample of at most `cap` rows per label, grouped by label.
std::vector<int> capped_subsample(const Labels& label, int cap, std::uint64_t seed);

double rsa_factorization(const RepresentationFn& f, const synth::Dataset& ds, const MetricConfig& cfg);

// --- geometric factorization -----------------------------------------------

/// Inputs grouped by anchor: `n_anchor` anchors of one block (with the
/// irrelevant block held fixed per anchor), each paired with `n_perturb`
/// random draws of the other block. Rows [a*n_perturb, (a+1)*n_perturb)
/// belong to anchor a.
struct AnchoredInputs {
  Matrix x;
  Labels anchor_class;
  int n_anchor = 0;
  int n_perturb = 0;
};
AnchoredInputs anchored_inputs(const synth::EnvironmentSpec& spec, synth::Block anchor, int n_anchor, int n_perturb,
                               std::uint64_t seed);

/// Per-anchor mean representations (n_anchor x dim).
Matrix anchor_means(const Matrix& reps, int n_anchor, int n_perturb);

/// 1 - var_fg|bg / var_fg from representations of background-anchored inputs.
/// Throws DegenerateError when var_fg < 1e-12.
double geometric_factorization(const Matrix& reps, int n_anchor, int n_perturb, double threshold = 0.99);
double geometric_factorization(const RepresentationFn& f, const synth::EnvironmentSpec& spec, const MetricConfig& cfg);

// --- FBPS ------------------------------------------------------------------

enum class Distance { l2, kl };

/// Base inputs with independent uniform causal and spurious classes, and the
/// two flipped copies (causal resp. spurious block redrawn from the opposite class).
struct FlipSet {
  Matrix base;
  Matrix fg_flipped;
  Matrix bg_flipped;
};
FlipSet flip_set(const synth::EnvironmentSpec& spec, int n_samples, std::uint64_t seed);

struct Fbps {
  double delta_fg = 0.0;
  double delta_bg = 0.0;
  double score = 0.0;  ///< delta_fg - delta_bg
};

/// Mean row-wise distance; KL is KL(a_row || b_row) on probabilities.
double mean_distance(const Matrix& a, const Matrix& b, Distance d);
Fbps fbps(const Matrix& base, const Matrix& fg_flipped, const Matrix& bg_flipped, Distance d);
Fbps fbps(const RepresentationFn& f, const synth::EnvironmentSpec& spec, Distance d, const MetricConfig& cfg);

// --- report -----------------------------------------------------------------

enum Flag : std::uint32_t {
  kFlagTrainingFailed = 1u << 0,
  kFlagProbeDegenerate = 1u << 1,
  kFlagRsaDegenerate = 1u << 2,
  kFlagGeomDegenerate = 1u << 3,
};

struct MetricReport {
  std::array<double, 3> probe_acc{};
  std::array<double, 3> rsa_r{};
  std::array<double, 3> geom_factorization{};
  std::array<double, 3> fbps_l2{};
  double fbps_kl_output = 0.0;
  double id_accuracy = 0.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  std::uint32_t flags = 0;

  static constexpr int kMetricCount = 13;
  /// The 13 metrics: probe_1..3, rsa_1..3, geom_1..3, fbps_l2_1..3, fbps_kl_out.
  std::array<double, kMetricCount> metric_values() const;
  static const std::array<const char*, kMetricCount>& metric_names();
  bool operator==(const MetricReport&) const = default;
};

/// All 13 metrics plus ID accuracy on `ds_id`; per-metric degeneracies are
/// recorded in `flags` (with a neutral value) instead of aborting.
MetricReport full_report(const mlp::MlpModel& m, const synth::Dataset& ds_id, const MetricConfig& cfg);

/// One population / metrics CSV row.
struct MetricRow {
  std::string model_id;
  double p_co = 0.0;
  double sigma_eps = 0.0;
  double ood1_acc = 0.0;
  double ood2_acc = 0.0;
  MetricReport report;

  double avg_ood() const { return 0.5 * (ood1_acc + ood2_acc); }
  bool operator==(const MetricRow&) const = default;
};

/// `model_id,p_co,sigma_eps,alpha1,alpha2,id_acc,ood1_acc,ood2_acc,probe_1..3,
/// rsa_1..3,geom_1..3,fbps_l2_1..3,fbps_kl_out,flags`
std::string csv_header();
std::string csv_row(const MetricRow& row);
MetricRow parse_csv_row(const std::string& line);

void write_rows(std::ostream& out, const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_rows(std::istream& in);

}  // namespace ctxlab::metrics
