#pragma once

// Population sweeps over training environments and objectives, and the
// studies run on the resulting tables: the OOD1/OOD2 tradeoff, bootstrap
// regression of OOD accuracy on metrics, and binned metric curves.

#include "ctxlab/common.hpp"
#include "ctxlab/interventions.hpp"
#include "ctxlab/metrics.hpp"
#include "ctxlab/mlp.hpp"
#include "ctxlab/numerics/regression.hpp"
#include "ctxlab/numerics/stats.hpp"
#include "ctxlab/synthenv.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace ctxlab::pop {

struct AlphaPoint {
  double alpha0 = 1.0;
  double alpha1 = 0.0;
  double alpha2 = 0.0;
};

enum class SweepMode { erm, augmentation, both };
std::string to_string(SweepMode mode);
SweepMode parse_sweep_mode(const std::string& s);

std::vector<double> linspace(double lo, double hi, int n);

struct SweepConfig {
  std::vector<double> p_co_grid = linspace(0.5, 0.98, 14);
  std::vector<double> sigma_grid = linspace(0.6, 1.6, 14);
  std::vector<AlphaPoint> alpha_points = default_alpha_points();
  int seeds_per_cell = 10;  ///< augmentation sweep replicates
  double alpha_cell_p_co = 0.9;
  double alpha_cell_sigma = 1.2;
  SweepMode mode = SweepMode::both;
  int n_train = 1000;
  int n_test = 1000;
  mlp::TrainConfig train;
  metrics::MetricConfig metrics;
  std::uint64_t master_seed = 0;
  int threads = 0;

  /// alpha0 = 1, alpha1 = 0.0 .. 1.0 in steps of 0.1, alpha2 = 1 - alpha1.
  static std::vector<AlphaPoint> default_alpha_points();
  void validate() const;
};

enum class CellKind { erm = 0, augmentation = 1, reference = 2 };

/// One trained model of a sweep. Randomness is derived from
/// (master_seed, kind, p index, sigma index, seed index); the alpha index only
/// selects the objective, so all alpha points of one replicate share data and
/// initialization.
struct Cell {
  CellKind kind = CellKind::erm;
  int p_index = 0;
  int sigma_index = 0;
  int alpha_index = 0;
  int seed_index = 0;
  double p_co = 0.0;
  double sigma_eps = 0.0;
  AlphaPoint alpha;

  std::string model_id() const;
};

std::vector<Cell> sweep_cells(const SweepConfig& cfg);
/// ERM models at the augmentation cell, one per seed index; used for interventions.
std::vector<Cell> reference_cells(const SweepConfig& cfg, int n_models);

struct CellData {
  synth::Dataset train, id, ood1, ood2;
};
CellData cell_data(const SweepConfig& cfg, const Cell& cell);
mlp::TrainConfig cell_train_config(const SweepConfig& cfg, const Cell& cell);
synth::EnvironmentSpec cell_spec(const SweepConfig& cfg, const Cell& cell);

struct CellResult {
  metrics::MetricRow row;
  mlp::MlpModel model;
};

/// Trains and evaluates a single cell. Training failures come back as a row
/// flagged kFlagTrainingFailed with NaN accuracies and metrics.
CellResult run_cell(const SweepConfig& cfg, const Cell& cell);

struct PopulationTable {
  std::vector<metrics::MetricRow> rows;

  /// Rows whose training succeeded.
  std::vector<metrics::MetricRow> usable() const;
  void write(std::ostream& out) const;
  static PopulationTable read(std::istream& in);
  void save(const std::string& path) const;
  static PopulationTable load(const std::string& path);
};

struct SweepResult {
  PopulationTable table;
  std::vector<mlp::MlpModel> models;
};

SweepResult run_sweep(const SweepConfig& cfg);

/// Trains the intervention models of reference_cells().
std::vector<interv::StudyModel> reference_models(const SweepConfig& cfg, int n_models);

// --- studies --------------------------------------------------------------

struct TradeoffStudy {
  num::Correlation correlation;
  std::vector<double> ood1;
  std::vector<double> ood2;
};

/// Pearson correlation of OOD1 vs OOD2 accuracy. Needs at least 10 usable rows.
TradeoffStudy tradeoff_study(const PopulationTable& table);

enum class FeatureSet { id_only, id_obj, id_obj_factor, id_obj_ftwgt, all };
std::string to_string(FeatureSet fs);
FeatureSet parse_feature_set(const std::string& s);
std::vector<FeatureSet> all_feature_sets();

enum class Target { avg_ood, ood1, ood2 };
std::string to_string(Target t);
Target parse_target(const std::string& s);

std::vector<std::string> feature_names(FeatureSet fs);

struct Design {
  Matrix x;
  Vector y;
  std::vector<std::string> names;
};
Design design_matrix(const PopulationTable& table, FeatureSet fs, Target target);

struct RegressionStudy {
  FeatureSet feature_set = FeatureSet::all;
  Target target = Target::avg_ood;
  std::vector<std::string> names;
  num::BootstrapSummary summary;
};

RegressionStudy regression_study(const PopulationTable& table, FeatureSet fs, Target target, int n_boot, std::uint64_t seed);

/// `feature,coef,p_value`, intercept first.
void write_coefficients(std::ostream& out, const RegressionStudy& study);
/// `feature_set,mean_r2,std_r2,n_boot` header followed by one line per study.
void write_regression_summary(std::ostream& out, const std::vector<RegressionStudy>& studies);

struct Bin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  double mean = 0.0;  ///< NaN for empty bins
  double std = 0.0;   ///< sample standard deviation; NaN for empty bins
  double center() const { return 0.5 * (lo + hi); }
};

/// Equal-width bins over [min x, max x]; the maximum lands in the last bin.
std::vector<Bin> binned_curve(const std::vector<double>& x, const std::vector<double>& y, int n_bins);
/// Index of the non-empty bin with the largest mean.
int argmax_bin(const std::vector<Bin>& bins);

/// Per alpha1 value, mean OOD1 and OOD2 accuracy over the augmentation rows.
struct MixingPoint {
  double alpha1 = 0.0;
  double ood1 = 0.0;
  double ood2 = 0.0;
  int n = 0;
};
std::vector<MixingPoint> mixing_curve(const PopulationTable& table);

/// Named column of a row: any metric name, `id_acc`, `ood1_acc`, `ood2_acc`,
/// `avg_ood`, `alpha1`, `alpha2`, `p_co` or `sigma_eps`.
double column(const metrics::MetricRow& row, const std::string& name);

// --- plot data ------------------------------------------------------------

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  ///< NaN entries are written as gaps
};

/// Two-column `x y` blocks with `#` header comments, separated by two blank lines.
void write_plot_data(std::ostream& out, const std::string& title, const std::vector<Series>& series);

}  // namespace ctxlab::pop
