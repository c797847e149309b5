#include "ctxlab/metrics.hpp"

#include "ctxlab/numerics/logistic.hpp"
#include "ctxlab/numerics/pca.hpp"
#include "ctxlab/numerics/stats.hpp"
#include "ctxlab/textio.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

namespace ctxlab::metrics {

namespace {

constexpr double kProbFloor = 1e-12;

// Sub-seed tags so each metric draws from its own stream.
enum : std::uint64_t { kSeedProbe = 1, kSeedRsa, kSeedGeom, kSeedFbps };

}  // namespace

RepresentationFn layer_fn(const mlp::MlpModel& m, int layer) {
  if (layer < 1 || layer > 4) throw InvalidArgument("layer must be 1..4");
  return [&m, layer](const Matrix& x) { return mlp::layer_output(m, x, layer); };
}

// ---------------------------------------------------------------------------
// Linear probe

ProbeSet block_only_probe_set(const synth::Dataset& ds) {
  if (ds.size() == 0) throw InvalidArgument("empty dataset");
  const auto fg = synth::make_block_only(ds, synth::Block::causal);
  const auto bg = synth::make_block_only(ds, synth::Block::spurious);
  ProbeSet p;
  p.x.resize(2 * ds.size(), ds.dim());
  p.x.topRows(ds.size()) = fg.data.x;
  p.x.bottomRows(ds.size()) = bg.data.x;
  p.label = fg.probe_label;
  p.label.insert(p.label.end(), bg.probe_label.begin(), bg.probe_label.end());
  return p;
}

MetricValue probe_accuracy(const Matrix& reps, const Labels& label, const MetricConfig& cfg) {
  constexpr int kProbeClasses = 2 * synth::kNumClasses;
  if (reps.cwiseAbs().maxCoeff() == 0.0) return {1.0 / kProbeClasses, true};
  return {num::kfold_cv_accuracy(reps, label, kProbeClasses, cfg.probe_folds, cfg.probe_l2, derive_seed(cfg.seed, kSeedProbe)),
          false};
}

MetricValue probe_factorization(const RepresentationFn& f, const synth::Dataset& ds, const MetricConfig& cfg) {
  const ProbeSet p = block_only_probe_set(ds);
  return probe_accuracy(f(p.x), p.label, cfg);
}

// ---------------------------------------------------------------------------
// RSA

Matrix euclidean_rdm(const Matrix& reps) {
  const Eigen::Index n = reps.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (reps.row(i) - reps.row(j)).norm();
  return d;
}

Matrix reference_rdm(const Labels& group) {
  const auto n = static_cast<Eigen::Index>(group.size());
  Matrix r(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      r(i, j) = group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)] ? 0.0 : 1.0;
  return r;
}

double rdm_correlation(const Matrix& model_rdm, const Matrix& reference) {
  if (model_rdm.rows() != reference.rows() || model_rdm.cols() != reference.cols() || model_rdm.rows() != model_rdm.cols())
    throw InvalidArgument("RDMs must be square and of equal size");
  const Eigen::Index n = model_rdm.rows();
  if (n < 3) throw InvalidArgument("RSA needs at least three items");
  std::vector<double> a, b;
  a.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  b.reserve(a.capacity());
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) {
      a.push_back(model_rdm(i, j));
      b.push_back(reference(i, j));
    }
  return num::pearson(a, b).r;
}

std::vector<int> capped_subsample(const Labels& label, int cap, std::uint64_t seed) {
  std::map<int, std::vector<int>> groups;
  for (std::size_t i = 0; i < label.size(); ++i) groups[label[i]].push_back(static_cast<int>(i));
  std::mt19937_64 rng(seed);
  std::vector<int> out;
  for (auto& [lab, idx] : groups) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto keep = std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cap));
    std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
    out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
  }
  return out;
}

double rsa_factorization(const RepresentationFn& f, const synth::Dataset& ds, const MetricConfig& cfg) {
  const ProbeSet p = block_only_probe_set(ds);
  const std::vector<int> keep = capped_subsample(p.label, cfg.rsa_cap, derive_seed(cfg.seed, kSeedRsa));
  const Matrix reps = f(take_rows(p.x, keep));
  return rdm_correlation(euclidean_rdm(reps), reference_rdm(take(p.label, keep)));
}

// ---------------------------------------------------------------------------
// Geometric factorization

AnchoredInputs anchored_inputs(const synth::EnvironmentSpec& spec, synth::Block anchor, int n_anchor, int n_perturb,
                               std::uint64_t seed) {
  if (n_anchor < 1 || n_perturb < 2) throw InvalidArgument("need n_anchor >= 1 and n_perturb >= 2");
  AnchoredInputs in;
  in.n_anchor = n_anchor;
  in.n_perturb = n_perturb;
  in.x.resize(static_cast<Eigen::Index>(n_anchor) * n_perturb, spec.total_dim());
  in.anchor_class.resize(static_cast<std::size_t>(n_anchor));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls(0, synth::kNumClasses - 1);
  Eigen::RowVectorXd fixed(spec.total_dim());
  Eigen::RowVectorXd row(spec.total_dim());
  for (int a = 0; a < n_anchor; ++a) {
    const int c = cls(rng);
    in.anchor_class[static_cast<std::size_t>(a)] = c;
    synth::fill_irrelevant(spec, rng, fixed);
    if (anchor == synth::Block::spurious)
      synth::fill_spurious(spec, c, rng, fixed);
    else
      synth::fill_causal(spec, c, rng, fixed);
    for (int k = 0; k < n_perturb; ++k) {
      row = fixed;
      if (anchor == synth::Block::spurious)
        synth::fill_causal(spec, cls(rng), rng, row);
      else
        synth::fill_spurious(spec, cls(rng), rng, row);
      in.x.row(static_cast<Eigen::Index>(a) * n_perturb + k) = row;
    }
  }
  return in;
}

Matrix anchor_means(const Matrix& reps, int n_anchor, int n_perturb) {
  if (reps.rows() != static_cast<Eigen::Index>(n_anchor) * n_perturb) throw InvalidArgument("row count mismatch");
  Matrix means(n_anchor, reps.cols());
  for (int a = 0; a < n_anchor; ++a)
    means.row(a) = reps.middleRows(static_cast<Eigen::Index>(a) * n_perturb, n_perturb).colwise().mean();
  return means;
}

namespace {

// Mean over anchors of the summed per-dimension variance within each anchor group.
double mean_group_variance(const Matrix& reps, int n_anchor, int n_perturb) {
  double total = 0.0;
  for (int a = 0; a < n_anchor; ++a) {
    const auto g = reps.middleRows(static_cast<Eigen::Index>(a) * n_perturb, n_perturb);
    const Matrix centered = g.rowwise() - g.colwise().mean();
    total += centered.squaredNorm() / static_cast<double>(n_perturb - 1);
  }
  return total / n_anchor;
}

}  // namespace

double geometric_factorization(const Matrix& reps, int n_anchor, int n_perturb, double threshold) {
  if (n_anchor < 2) throw InvalidArgument("need at least two anchors");
  const double var_fg = mean_group_variance(reps, n_anchor, n_perturb);
  if (var_fg < 1e-12) throw DegenerateError("geometric factorization undefined: no foreground-induced variance");
  const auto bg = num::top_k_for_variance(num::pca(anchor_means(reps, n_anchor, n_perturb)), threshold);
  const Matrix projected = reps * bg.basis.transpose();
  const double var_fg_bg = mean_group_variance(projected, n_anchor, n_perturb);
  return 1.0 - var_fg_bg / var_fg;
}

double geometric_factorization(const RepresentationFn& f, const synth::EnvironmentSpec& spec, const MetricConfig& cfg) {
  if (cfg.n_anchor < 10 || cfg.n_perturb < 10) throw InvalidArgument("need n_anchor >= 10 and n_perturb >= 10");
  const auto in = anchored_inputs(spec, synth::Block::spurious, cfg.n_anchor, cfg.n_perturb, derive_seed(cfg.seed, kSeedGeom));
  return geometric_factorization(f(in.x), in.n_anchor, in.n_perturb, cfg.subspace_threshold);
}

// ---------------------------------------------------------------------------
// FBPS

FlipSet flip_set(const synth::EnvironmentSpec& spec, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
  FlipSet s;
  const int d = spec.total_dim();
  s.base.resize(n_samples, d);
  s.fg_flipped.resize(n_samples, d);
  s.bg_flipped.resize(n_samples, d);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> cls(0, synth::kNumClasses - 1);
  Eigen::RowVectorXd row(d), alt(d);
  for (int i = 0; i < n_samples; ++i) {
    const int zc = cls(rng);
    const int zs = cls(rng);
    synth::fill_irrelevant(spec, rng, row);
    synth::fill_causal(spec, zc, rng, row);
    synth::fill_spurious(spec, zs, rng, row);
    s.base.row(i) = row;
    alt = row;
    synth::fill_causal(spec, 1 - zc, rng, alt);
    s.fg_flipped.row(i) = alt;
    alt = row;
    synth::fill_spurious(spec, 1 - zs, rng, alt);
    s.bg_flipped.row(i) = alt;
  }
  return s;
}

double mean_distance(const Matrix& a, const Matrix& b, Distance d) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("shape mismatch");
  if (a.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (d == Distance::l2) {
      total += (a.row(i) - b.row(i)).norm();
    } else {
      double kl = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) {
        const double p = std::max(a(i, k), kProbFloor);
        const double q = std::max(b(i, k), kProbFloor);
        kl += p * std::log(p / q);
      }
      total += kl;
    }
  }
  return total / static_cast<double>(a.rows());
}

Fbps fbps(const Matrix& base, const Matrix& fg_flipped, const Matrix& bg_flipped, Distance d) {
  Fbps r;
  r.delta_fg = mean_distance(base, fg_flipped, d);
  r.delta_bg = mean_distance(base, bg_flipped, d);
  r.score = r.delta_fg - r.delta_bg;
  return r;
}

Fbps fbps(const RepresentationFn& f, const synth::EnvironmentSpec& spec, Distance d, const MetricConfig& cfg) {
  if (cfg.fbps_samples < 100) throw InvalidArgument("FBPS needs at least 100 samples");
  const FlipSet s = flip_set(spec, cfg.fbps_samples, derive_seed(cfg.seed, kSeedFbps));
  return fbps(f(s.base), f(s.fg_flipped), f(s.bg_flipped), d);
}

// ---------------------------------------------------------------------------
// Report

std::array<double, MetricReport::kMetricCount> MetricReport::metric_values() const {
  return {probe_acc[0], probe_acc[1], probe_acc[2], rsa_r[0], rsa_r[1], rsa_r[2],
          geom_factorization[0], geom_factorization[1], geom_factorization[2],
          fbps_l2[0], fbps_l2[1], fbps_l2[2], fbps_kl_output};
}

const std::array<const char*, MetricReport::kMetricCount>& MetricReport::metric_names() {
  static const std::array<const char*, kMetricCount> names = {
      "probe_1", "probe_2", "probe_3", "rsa_1", "rsa_2", "rsa_3", "geom_1",
      "geom_2", "geom_3", "fbps_l2_1", "fbps_l2_2", "fbps_l2_3", "fbps_kl_out"};
  return names;
}

MetricReport full_report(const mlp::MlpModel& m, const synth::Dataset& ds_id, const MetricConfig& cfg) {
  MetricReport r;
  r.id_accuracy = mlp::evaluate(m, ds_id);
  const synth::EnvironmentSpec& spec = ds_id.spec;

  // Every metric input set is drawn once and pushed through the network once;
  // layers are read off the same forward pass.
  const ProbeSet probe = block_only_probe_set(ds_id);
  const mlp::RepresentationSet probe_reps = mlp::forward(m, probe.x);

  const std::vector<int> rsa_keep = capped_subsample(probe.label, cfg.rsa_cap, derive_seed(cfg.seed, kSeedRsa));
  const Matrix reference = reference_rdm(take(probe.label, rsa_keep));

  const auto anchored = anchored_inputs(spec, synth::Block::spurious, cfg.n_anchor, cfg.n_perturb, derive_seed(cfg.seed, kSeedGeom));
  const mlp::RepresentationSet geom_reps = mlp::forward(m, anchored.x);

  const FlipSet flips = flip_set(spec, cfg.fbps_samples, derive_seed(cfg.seed, kSeedFbps));
  const mlp::RepresentationSet base = mlp::forward(m, flips.base);
  const mlp::RepresentationSet fg = mlp::forward(m, flips.fg_flipped);
  const mlp::RepresentationSet bg = mlp::forward(m, flips.bg_flipped);

  for (int layer = 1; layer <= mlp::kLayers; ++layer) {
    const auto k = static_cast<std::size_t>(layer - 1);
    const MetricValue probe_value = probe_accuracy(probe_reps.layer(layer), probe.label, cfg);
    r.probe_acc[k] = probe_value.value;
    if (probe_value.degenerate) r.flags |= kFlagProbeDegenerate;

    try {
      r.rsa_r[k] = rdm_correlation(euclidean_rdm(take_rows(probe_reps.layer(layer), rsa_keep)), reference);
    } catch (const DegenerateError&) {
      r.rsa_r[k] = 0.0;
      r.flags |= kFlagRsaDegenerate;
    }

    try {
      r.geom_factorization[k] =
          geometric_factorization(geom_reps.layer(layer), anchored.n_anchor, anchored.n_perturb, cfg.subspace_threshold);
    } catch (const DegenerateError&) {
      r.geom_factorization[k] = 0.0;
      r.flags |= kFlagGeomDegenerate;
    }

    r.fbps_l2[k] = fbps(base.layer(layer), fg.layer(layer), bg.layer(layer), Distance::l2).score;
  }
  r.fbps_kl_output = fbps(base.task_prob, fg.task_prob, bg.task_prob, Distance::kl).score;
  return r;
}

// ---------------------------------------------------------------------------
// CSV

std::string csv_header() {
  std::string h = "model_id,p_co,sigma_eps,alpha1,alpha2,id_acc,ood1_acc,ood2_acc";
  for (const char* name : MetricReport::metric_names()) h += std::string(",") + name;
  return h + ",flags";
}

std::string csv_row(const MetricRow& row) {
  const MetricReport& r = row.report;
  std::string s = row.model_id;
  for (double v : {row.p_co, row.sigma_eps, r.alpha1, r.alpha2, r.id_accuracy, row.ood1_acc, row.ood2_acc})
    s += "," + text::num(v);
  for (double v : r.metric_values()) s += "," + text::num(v);
  return s + "," + std::to_string(r.flags);
}

MetricRow parse_csv_row(const std::string& line) {
  const auto c = text::split(text::trim(line), ',');
  constexpr std::size_t kCols = 8 + MetricReport::kMetricCount + 1;
  if (c.size() != kCols) throw IoError("metric row has " + std::to_string(c.size()) + " columns, expected " + std::to_string(kCols));
  MetricRow row;
  row.model_id = c[0];
  row.p_co = text::to_double(c[1]);
  row.sigma_eps = text::to_double(c[2]);
  MetricReport& r = row.report;
  r.alpha1 = text::to_double(c[3]);
  r.alpha2 = text::to_double(c[4]);
  r.id_accuracy = text::to_double(c[5]);
  row.ood1_acc = text::to_double(c[6]);
  row.ood2_acc = text::to_double(c[7]);
  for (std::size_t k = 0; k < 3; ++k) {
    r.probe_acc[k] = text::to_double(c[8 + k]);
    r.rsa_r[k] = text::to_double(c[11 + k]);
    r.geom_factorization[k] = text::to_double(c[14 + k]);
    r.fbps_l2[k] = text::to_double(c[17 + k]);
  }
  r.fbps_kl_output = text::to_double(c[20]);
  r.flags = static_cast<std::uint32_t>(text::to_u64(c[21]));
  return row;
}

void write_rows(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

std::vector<MetricRow> read_rows(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty metrics file");
  if (text::trim(line) != csv_header()) throw IoError("unexpected metrics header");
  std::vector<MetricRow> rows;
  while (std::getline(in, line))
    if (!text::trim(line).empty()) rows.push_back(parse_csv_row(line));
  return rows;
}

}  // namespace ctxlab::metrics
