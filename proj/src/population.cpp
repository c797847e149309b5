#include "ctxlab/population.hpp"

#include "ctxlab/parallel.hpp"
#include "ctxlab/textio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>

namespace ctxlab::pop {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum : std::uint64_t { kSeedTrainData = 1, kSeedIdData, kSeedOod1Data, kSeedOod2Data, kSeedInit, kSeedMetrics };

std::uint64_t cell_seed(const SweepConfig& cfg, const Cell& c) {
  return derive_seed(cfg.master_seed, static_cast<std::uint64_t>(c.kind), static_cast<std::uint64_t>(c.p_index),
                     static_cast<std::uint64_t>(c.sigma_index), static_cast<std::uint64_t>(c.seed_index));
}

std::string two_digits(const char* prefix, int v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%s%02d", prefix, v);
  return buf;
}

}  // namespace

std::string to_string(SweepMode mode) {
  switch (mode) {
    case SweepMode::erm: return "erm";
    case SweepMode::augmentation: return "augmentation";
    case SweepMode::both: return "both";
  }
  return "?";
}

SweepMode parse_sweep_mode(const std::string& s) {
  if (s == "erm") return SweepMode::erm;
  if (s == "augmentation" || s == "aug") return SweepMode::augmentation;
  if (s == "both") return SweepMode::both;
  throw InvalidArgument("unknown sweep mode '" + s + "'");
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw InvalidArgument("linspace needs n >= 1");
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  if (n > 1) v.back() = hi;
  return v;
}

std::vector<AlphaPoint> SweepConfig::default_alpha_points() {
  std::vector<AlphaPoint> pts;
  for (int i = 0; i <= 10; ++i) pts.push_back({1.0, i / 10.0, 1.0 - i / 10.0});
  return pts;
}

void SweepConfig::validate() const {
  if (p_co_grid.empty() || sigma_grid.empty()) throw InvalidArgument("sweep grids must be nonempty");
  for (double p : p_co_grid)
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p_co grid values must lie in [0, 1]");
  for (double s : sigma_grid)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("sigma_eps grid values must be finite and nonnegative");
  if (mode != SweepMode::erm && alpha_points.empty()) throw InvalidArgument("alpha sweep list must be nonempty");
  for (const auto& a : alpha_points)
    if (a.alpha0 < 0 || a.alpha1 < 0 || a.alpha2 < 0) throw InvalidArgument("alpha weights must be nonnegative");
  if (seeds_per_cell < 1) throw InvalidArgument("seeds_per_cell must be positive");
  if (n_train < 2 || n_test < 2) throw InvalidArgument("n_train and n_test must be at least 2");
  if (!(alpha_cell_p_co >= 0.0 && alpha_cell_p_co <= 1.0)) throw InvalidArgument("alpha_cell_p_co must lie in [0, 1]");
  if (!(alpha_cell_sigma >= 0.0)) throw InvalidArgument("alpha_cell_sigma must be nonnegative");
  train.validate();
}

std::string Cell::model_id() const {
  switch (kind) {
    case CellKind::erm: return "erm_" + two_digits("p", p_index) + "_" + two_digits("s", sigma_index);
    case CellKind::augmentation: return "aug_" + two_digits("a", alpha_index) + "_" + two_digits("r", seed_index);
    case CellKind::reference: return "ref_" + two_digits("r", seed_index);
  }
  return "?";
}

std::vector<Cell> sweep_cells(const SweepConfig& cfg) {
  std::vector<Cell> cells;
  if (cfg.mode != SweepMode::augmentation) {
    for (std::size_t i = 0; i < cfg.p_co_grid.size(); ++i)
      for (std::size_t j = 0; j < cfg.sigma_grid.size(); ++j) {
        Cell c;
        c.kind = CellKind::erm;
        c.p_index = static_cast<int>(i);
        c.sigma_index = static_cast<int>(j);
        c.p_co = cfg.p_co_grid[i];
        c.sigma_eps = cfg.sigma_grid[j];
        cells.push_back(c);
      }
  }
  if (cfg.mode != SweepMode::erm) {
    for (int r = 0; r < cfg.seeds_per_cell; ++r)
      for (std::size_t a = 0; a < cfg.alpha_points.size(); ++a) {
        Cell c;
        c.kind = CellKind::augmentation;
        c.alpha_index = static_cast<int>(a);
        c.seed_index = r;
        c.p_co = cfg.alpha_cell_p_co;
        c.sigma_eps = cfg.alpha_cell_sigma;
        c.alpha = cfg.alpha_points[a];
        cells.push_back(c);
      }
  }
  return cells;
}

std::vector<Cell> reference_cells(const SweepConfig& cfg, int n_models) {
  std::vector<Cell> cells;
  for (int r = 0; r < n_models; ++r) {
    Cell c;
    c.kind = CellKind::reference;
    c.seed_index = r;
    c.p_co = cfg.alpha_cell_p_co;
    c.sigma_eps = cfg.alpha_cell_sigma;
    cells.push_back(c);
  }
  return cells;
}

synth::EnvironmentSpec cell_spec(const SweepConfig& cfg, const Cell& cell) {
  synth::EnvironmentSpec spec;
  spec.p_co = cell.p_co;
  spec.sigma_eps = cell.sigma_eps;
  spec.n_samples = cfg.n_train;
  spec.seed = derive_seed(cell_seed(cfg, cell), kSeedTrainData);
  return spec;
}

CellData cell_data(const SweepConfig& cfg, const Cell& cell) {
  const std::uint64_t base = cell_seed(cfg, cell);
  const synth::EnvironmentSpec train = cell_spec(cfg, cell);
  synth::EnvironmentSpec id = train;
  id.n_samples = cfg.n_test;
  id.seed = derive_seed(base, kSeedIdData);
  synth::EnvironmentSpec o1 = synth::make_ood1(id);
  o1.seed = derive_seed(base, kSeedOod1Data);
  synth::EnvironmentSpec o2 = synth::make_ood2(id);
  o2.seed = derive_seed(base, kSeedOod2Data);
  return {synth::generate(train), synth::generate(id), synth::generate(o1), synth::generate(o2)};
}

mlp::TrainConfig cell_train_config(const SweepConfig& cfg, const Cell& cell) {
  mlp::TrainConfig tc = cfg.train;
  tc.alpha0 = cell.alpha.alpha0;
  tc.alpha1 = cell.alpha.alpha1;
  tc.alpha2 = cell.alpha.alpha2;
  tc.seed = derive_seed(cell_seed(cfg, cell), kSeedInit);
  return tc;
}

CellResult run_cell(const SweepConfig& cfg, const Cell& cell) {
  const CellData data = cell_data(cfg, cell);
  const mlp::TrainConfig tc = cell_train_config(cfg, cell);

  CellResult out;
  metrics::MetricRow& row = out.row;
  row.model_id = cell.model_id();
  row.p_co = cell.p_co;
  row.sigma_eps = cell.sigma_eps;
  try {
    out.model = mlp::train(data.train, tc);
  } catch (const DegenerateError&) {
    out.model = mlp::MlpModel::zeros(data.train.dim());
    row.ood1_acc = row.ood2_acc = kNaN;
    metrics::MetricReport& r = row.report;
    r.probe_acc.fill(kNaN);
    r.rsa_r.fill(kNaN);
    r.geom_factorization.fill(kNaN);
    r.fbps_l2.fill(kNaN);
    r.fbps_kl_output = r.id_accuracy = kNaN;
    r.alpha1 = tc.alpha1;
    r.alpha2 = tc.alpha2;
    r.flags = metrics::kFlagTrainingFailed;
    return out;
  }

  metrics::MetricConfig mc = cfg.metrics;
  mc.seed = derive_seed(cell_seed(cfg, cell), kSeedMetrics);
  row.report = metrics::full_report(out.model, data.id, mc);
  row.report.alpha1 = tc.alpha1;
  row.report.alpha2 = tc.alpha2;
  row.ood1_acc = mlp::evaluate(out.model, data.ood1);
  row.ood2_acc = mlp::evaluate(out.model, data.ood2);
  return out;
}

SweepResult run_sweep(const SweepConfig& cfg) {
  cfg.validate();
  const std::vector<Cell> cells = sweep_cells(cfg);
  std::vector<CellResult> results(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) { results[i] = run_cell(cfg, cells[i]); });
  SweepResult out;
  for (auto& r : results) {
    out.table.rows.push_back(std::move(r.row));
    out.models.push_back(std::move(r.model));
  }
  return out;
}

std::vector<interv::StudyModel> reference_models(const SweepConfig& cfg, int n_models) {
  cfg.validate();
  const std::vector<Cell> cells = reference_cells(cfg, n_models);
  std::vector<interv::StudyModel> models(cells.size());
  parallel_for(cells.size(), cfg.threads, [&](std::size_t i) {
    const CellData data = cell_data(cfg, cells[i]);
    models[i] = {cells[i].model_id(), data.train.spec, mlp::train(data.train, cell_train_config(cfg, cells[i]))};
  });
  return models;
}

// ---------------------------------------------------------------------------

std::vector<metrics::MetricRow> PopulationTable::usable() const {
  std::vector<metrics::MetricRow> out;
  for (const auto& r : rows)
    if (!(r.report.flags & metrics::kFlagTrainingFailed)) out.push_back(r);
  return out;
}

void PopulationTable::write(std::ostream& out) const { metrics::write_rows(out, rows); }

PopulationTable PopulationTable::read(std::istream& in) { return {metrics::read_rows(in)}; }

void PopulationTable::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write(out);
  if (!out) throw IoError("failed writing " + path);
}

PopulationTable PopulationTable::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  return read(in);
}

// ---------------------------------------------------------------------------

TradeoffStudy tradeoff_study(const PopulationTable& table) {
  TradeoffStudy s;
  for (const auto& r : table.usable()) {
    s.ood1.push_back(r.ood1_acc);
    s.ood2.push_back(r.ood2_acc);
  }
  if (s.ood1.size() < 10) throw InvalidArgument("tradeoff study needs at least 10 rows");
  s.correlation = num::pearson(s.ood1, s.ood2);
  return s;
}

std::string to_string(FeatureSet fs) {
  switch (fs) {
    case FeatureSet::id_only: return "id_only";
    case FeatureSet::id_obj: return "id_obj";
    case FeatureSet::id_obj_factor: return "id_obj_factor";
    case FeatureSet::id_obj_ftwgt: return "id_obj_ftwgt";
    case FeatureSet::all: return "all";
  }
  return "?";
}

FeatureSet parse_feature_set(const std::string& s) {
  for (FeatureSet fs : all_feature_sets())
    if (to_string(fs) == s) return fs;
  throw InvalidArgument("unknown feature set '" + s + "'");
}

std::vector<FeatureSet> all_feature_sets() {
  return {FeatureSet::id_only, FeatureSet::id_obj, FeatureSet::id_obj_factor, FeatureSet::id_obj_ftwgt, FeatureSet::all};
}

std::string to_string(Target t) {
  switch (t) {
    case Target::avg_ood: return "avg_ood";
    case Target::ood1: return "ood1_acc";
    case Target::ood2: return "ood2_acc";
  }
  return "?";
}

Target parse_target(const std::string& s) {
  if (s == "avg" || s == "avg_ood") return Target::avg_ood;
  if (s == "ood1" || s == "ood1_acc") return Target::ood1;
  if (s == "ood2" || s == "ood2_acc") return Target::ood2;
  throw InvalidArgument("unknown regression target '" + s + "'");
}

std::vector<std::string> feature_names(FeatureSet fs) {
  const auto& metric = metrics::MetricReport::metric_names();
  std::vector<std::string> names = {"id_acc"};
  if (fs == FeatureSet::id_only) return names;
  names.push_back("alpha1");
  names.push_back("alpha2");
  const bool factor = fs == FeatureSet::id_obj_factor || fs == FeatureSet::all;
  const bool ftwgt = fs == FeatureSet::id_obj_ftwgt || fs == FeatureSet::all;
  if (factor) names.insert(names.end(), metric.begin(), metric.begin() + 9);
  if (ftwgt) names.insert(names.end(), metric.begin() + 9, metric.end());
  return names;
}

double column(const metrics::MetricRow& row, const std::string& name) {
  if (name == "id_acc") return row.report.id_accuracy;
  if (name == "ood1_acc") return row.ood1_acc;
  if (name == "ood2_acc") return row.ood2_acc;
  if (name == "avg_ood") return row.avg_ood();
  if (name == "alpha1") return row.report.alpha1;
  if (name == "alpha2") return row.report.alpha2;
  if (name == "p_co") return row.p_co;
  if (name == "sigma_eps") return row.sigma_eps;
  const auto& names = metrics::MetricReport::metric_names();
  const auto values = row.report.metric_values();
  for (std::size_t k = 0; k < names.size(); ++k)
    if (name == names[k]) return values[k];
  throw InvalidArgument("unknown column '" + name + "'");
}

Design design_matrix(const PopulationTable& table, FeatureSet fs, Target target) {
  const auto rows = table.usable();
  Design d;
  d.names = feature_names(fs);
  d.x.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d.names.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < d.names.size(); ++j) d.x(ii, static_cast<Eigen::Index>(j)) = column(rows[i], d.names[j]);
    d.y(ii) = column(rows[i], to_string(target));
  }
  return d;
}

RegressionStudy regression_study(const PopulationTable& table, FeatureSet fs, Target target, int n_boot, std::uint64_t seed) {
  const Design d = design_matrix(table, fs, target);
  RegressionStudy s;
  s.feature_set = fs;
  s.target = target;
  s.names = d.names;
  s.summary = num::ols_bootstrap(d.x, d.y, n_boot, 0.8, seed);
  return s;
}

void write_coefficients(std::ostream& out, const RegressionStudy& study) {
  const auto& full = study.summary.full;
  out << "feature,coef,p_value\n";
  out << "intercept," << text::num(full.intercept) << ',' << text::num(full.intercept_p_value) << '\n';
  for (std::size_t j = 0; j < study.names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out << study.names[j] << ',' << text::num(full.coefficients(jj)) << ',' << text::num(full.p_values(jj)) << '\n';
  }
}

void write_regression_summary(std::ostream& out, const std::vector<RegressionStudy>& studies) {
  out << "feature_set,mean_r2,std_r2,n_boot\n";
  for (const auto& s : studies)
    out << to_string(s.feature_set) << ',' << text::num(s.summary.mean_r2_test) << ',' << text::num(s.summary.std_r2_test)
        << ',' << s.summary.n_boot << '\n';
}

// ---------------------------------------------------------------------------

std::vector<Bin> binned_curve(const std::vector<double>& x, const std::vector<double>& y, int n_bins) {
  if (n_bins < 2) throw InvalidArgument("need at least two bins");
  if (x.size() != y.size()) throw InvalidArgument("x and y must have equal length");
  if (x.empty()) throw InvalidArgument("binned_curve needs data");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double width = (hi - lo) / n_bins;
  std::vector<Bin> bins(static_cast<std::size_t>(n_bins));
  std::vector<std::vector<double>> members(bins.size());
  for (int b = 0; b < n_bins; ++b) {
    bins[static_cast<std::size_t>(b)].lo = lo + width * b;
    bins[static_cast<std::size_t>(b)].hi = b + 1 == n_bins ? hi : lo + width * (b + 1);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    int b = width > 0.0 ? static_cast<int>(std::floor((x[i] - lo) / width)) : 0;
    b = std::clamp(b, 0, n_bins - 1);
    members[static_cast<std::size_t>(b)].push_back(y[i]);
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].count = static_cast<int>(members[b].size());
    if (members[b].empty()) {
      bins[b].mean = bins[b].std = kNaN;
    } else {
      bins[b].mean = num::mean(members[b]);
      bins[b].std = num::stddev(members[b]);
    }
  }
  return bins;
}

int argmax_bin(const std::vector<Bin>& bins) {
  int best = -1;
  for (std::size_t b = 0; b < bins.size(); ++b)
    if (bins[b].count > 0 && (best < 0 || bins[b].mean > bins[static_cast<std::size_t>(best)].mean)) best = static_cast<int>(b);
  return best;
}

std::vector<MixingPoint> mixing_curve(const PopulationTable& table) {
  std::map<double, MixingPoint> by_alpha;
  for (const auto& r : table.usable()) {
    if (r.model_id.rfind("aug_", 0) != 0) continue;
    MixingPoint& p = by_alpha[r.report.alpha1];
    p.alpha1 = r.report.alpha1;
    p.ood1 += r.ood1_acc;
    p.ood2 += r.ood2_acc;
    ++p.n;
  }
  std::vector<MixingPoint> out;
  for (auto& [a, p] : by_alpha) {
    p.ood1 /= p.n;
    p.ood2 /= p.n;
    out.push_back(p);
  }
  return out;
}

void write_plot_data(std::ostream& out, const std::string& title, const std::vector<Series>& series) {
  out << "# " << title << '\n';
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (s > 0) out << "\n\n";
    out << "# series: " << series[s].name << '\n' << "# x y\n";
    for (std::size_t i = 0; i < series[s].x.size(); ++i) {
      if (std::isnan(series[s].y[i])) {
        out << '\n';
        continue;
      }
      out << text::num(series[s].x[i]) << ' ' << text::num(series[s].y[i]) << '\n';
    }
  }
}

}  // namespace ctxlab::pop
