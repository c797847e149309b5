#include "cli_app.hpp"

#include "ctxlab/interventions.hpp"
#include "ctxlab/metrics.hpp"
#include "ctxlab/mlp.hpp"
#include "ctxlab/population.hpp"
#include "ctxlab/synthenv.hpp"
#include "ctxlab/textio.hpp"

#include "CLI11.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

namespace ctxlab::cli {

namespace {

namespace fs = std::filesystem;

using Settings = std::map<std::string, std::string>;

Settings read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  Settings s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = text::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected key=value");
    s[text::trim(t.substr(0, eq))] = text::trim(t.substr(eq + 1));
  }
  return s;
}

class Options {
 public:
  explicit Options(Settings s) : s_(std::move(s)) {}

  bool has(const std::string& key) const { return s_.count(key) > 0; }
  const Settings& all() const { return s_; }

  std::string str(const std::string& key, const std::string& fallback) const {
    const auto it = s_.find(key);
    return it == s_.end() ? fallback : it->second;
  }
  std::string required(const std::string& key) const {
    const auto it = s_.find(key);
    if (it == s_.end() || it->second.empty()) throw InvalidArgument("missing required option '" + key + "'");
    return it->second;
  }
  double real(const std::string& key, double fallback) const { return has(key) ? text::to_double(s_.at(key)) : fallback; }
  int integer(const std::string& key, int fallback) const {
    return has(key) ? static_cast<int>(text::to_int(s_.at(key))) : fallback;
  }
  bool flag(const std::string& key) const {
    const std::string v = str(key, "0");
    return v == "1" || v == "true" || v == "yes";
  }
  std::vector<double> reals(const std::string& key, std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    std::vector<double> v;
    for (const auto& part : text::split(s_.at(key), ',')) v.push_back(text::to_double(text::trim(part)));
    return v;
  }

  /// Master seed from `seed`, then `master_seed`, then CTXLAB_SEED.
  std::uint64_t seed() const {
    if (has("seed")) return text::to_u64(s_.at("seed"));
    if (has("master_seed")) return text::to_u64(s_.at("master_seed"));
    if (const char* env = std::getenv("CTXLAB_SEED"); env && *env) return text::to_u64(env);
    throw InvalidArgument("a seed is required (--seed, seed= in the config, or CTXLAB_SEED)");
  }

 private:
  Settings s_;
};

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw IoError("missing input " + path);
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out = open_out(path);
  body(out);
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

// --- settings -> typed configs ----------------------------------------------

void apply_train(const Options& o, mlp::TrainConfig& c) {
  c.lr = o.real("lr", c.lr);
  c.epochs = o.integer("epochs", c.epochs);
  c.lr_decay_every = o.integer("lr_decay_every", c.lr_decay_every);
  c.lr_decay_factor = o.real("lr_decay_factor", c.lr_decay_factor);
  c.batch_size = o.integer("batch_size", c.batch_size);
  c.alpha0 = o.real("alpha0", c.alpha0);
  c.alpha1 = o.real("alpha1", c.alpha1);
  c.alpha2 = o.real("alpha2", c.alpha2);
}

void apply_metrics(const Options& o, metrics::MetricConfig& c) {
  c.probe_folds = o.integer("probe_folds", c.probe_folds);
  c.probe_l2 = o.real("probe_l2", c.probe_l2);
  c.rsa_cap = o.integer("rsa_cap", c.rsa_cap);
  c.n_anchor = o.integer("n_anchor", c.n_anchor);
  c.n_perturb = o.integer("n_perturb", c.n_perturb);
  c.subspace_threshold = o.real("subspace_threshold", c.subspace_threshold);
  c.fbps_samples = o.integer("fbps_samples", c.fbps_samples);
}

std::vector<pop::AlphaPoint> parse_alpha_points(const std::string& s) {
  std::vector<pop::AlphaPoint> pts;
  for (const auto& item : text::split(s, ',')) {
    const auto parts = text::split(text::trim(item), ':');
    if (parts.size() != 3) throw InvalidArgument("alpha_points entries must be a0:a1:a2");
    pts.push_back({text::to_double(parts[0]), text::to_double(parts[1]), text::to_double(parts[2])});
  }
  return pts;
}

pop::SweepConfig sweep_config(const Options& o) {
  pop::SweepConfig c;
  c.p_co_grid = o.reals("p_co_grid", c.p_co_grid);
  c.sigma_grid = o.reals("sigma_grid", c.sigma_grid);
  if (o.has("alpha_points")) c.alpha_points = parse_alpha_points(o.str("alpha_points", ""));
  c.seeds_per_cell = o.integer("seeds_per_cell", c.seeds_per_cell);
  c.alpha_cell_p_co = o.real("alpha_cell_p_co", c.alpha_cell_p_co);
  c.alpha_cell_sigma = o.real("alpha_cell_sigma", c.alpha_cell_sigma);
  if (o.has("mode")) c.mode = pop::parse_sweep_mode(o.str("mode", ""));
  c.n_train = o.integer("n_train", c.n_train);
  c.n_test = o.integer("n_test", c.n_test);
  c.threads = o.integer("threads", c.threads);
  apply_train(o, c.train);
  apply_metrics(o, c.metrics);
  c.master_seed = o.seed();
  c.validate();
  return c;
}

interv::StudyConfig study_config(const Options& o, std::uint64_t seed) {
  interv::StudyConfig c;
  c.l2 = o.real("l2", c.l2);
  c.folds = o.integer("folds", c.folds);
  c.n_eval = o.integer("n_eval", c.n_eval);
  c.n_rotation = o.integer("n_rotation", c.n_rotation);
  c.literal_rotation = o.flag("literal_rotation");
  c.threads = o.integer("threads", c.threads);
  apply_metrics(o, c.metrics);
  c.seed = seed;
  return c;
}

// --- commands -----------------------------------------------------------------

int cmd_gen(const Options& o, std::ostream& out) {
  synth::EnvironmentSpec spec;
  for (const auto& [key, value] : o.all()) {
    if (key == "seed" || key == "master_seed") continue;
    synth::set_spec_field(spec, key, value);
  }
  if (o.has("n")) spec.n_samples = o.integer("n", spec.n_samples);
  const std::uint64_t seed = o.seed();
  const std::string dir = o.required("out");
  spec.validate();
  make_dir(dir);

  synth::EnvironmentSpec train = spec;
  train.seed = derive_seed(seed, 1);
  synth::EnvironmentSpec id = spec;
  id.seed = derive_seed(seed, 2);
  synth::EnvironmentSpec o1 = synth::make_ood1(spec);
  o1.seed = derive_seed(seed, 3);
  synth::EnvironmentSpec o2 = synth::make_ood2(spec);
  o2.seed = derive_seed(seed, 4);
  const std::pair<const char*, synth::EnvironmentSpec> splits[] = {{"train", train}, {"id", id}, {"ood1", o1}, {"ood2", o2}};
  for (const auto& [name, s] : splits) {
    const std::string path = join(dir, std::string(name) + ".csv");
    synth::save(path, synth::generate(s));
    out << "wrote " << path << '\n';
  }
  return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
  const std::string data = o.required("data");
  const std::string dir = o.required("out");
  for (const char* name : {"train", "id", "ood1", "ood2"}) require_file(join(data, std::string(name) + ".csv"));
  mlp::TrainConfig cfg;
  apply_train(o, cfg);
  cfg.seed = o.seed();
  cfg.validate();
  make_dir(dir);

  const synth::Dataset train = synth::load(join(data, "train.csv"));
  const mlp::MlpModel model = mlp::train(train, cfg);
  mlp::save_checkpoint(join(dir, "model.json"), model, cfg);
  write_file(join(dir, "eval.csv"), [&](std::ostream& f) {
    f << "split,accuracy\n";
    for (const char* name : {"train", "id", "ood1", "ood2"}) {
      const double acc = mlp::evaluate(model, synth::load(join(data, std::string(name) + ".csv")));
      f << name << ',' << text::num(acc) << '\n';
      out << name << " accuracy " << text::num(acc) << '\n';
    }
  });
  return kExitOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const pop::SweepConfig cfg = sweep_config(o);
  const std::string path = o.str("out", "population.csv");
  if (fs::path(path).has_parent_path()) make_dir(fs::path(path).parent_path().string());
  const pop::SweepResult result = pop::run_sweep(cfg);
  write_file(path, [&](std::ostream& f) { result.table.write(f); });
  out << "wrote " << result.table.rows.size() << " rows to " << path << '\n';
  return kExitOk;
}

int cmd_metrics(const Options& o, std::ostream& out) {
  const std::string model_path = o.required("model");
  const std::string data = o.required("data");
  require_file(model_path);
  require_file(join(data, "id.csv"));
  metrics::MetricConfig mc;
  apply_metrics(o, mc);
  mc.seed = o.seed();
  mlp::TrainConfig tc;
  const mlp::MlpModel model = mlp::load_checkpoint(model_path, &tc);
  const synth::Dataset id = synth::load(join(data, "id.csv"));

  metrics::MetricRow row;
  row.model_id = o.str("model_id", fs::path(model_path).stem().string());
  row.p_co = id.spec.p_co;
  row.sigma_eps = id.spec.sigma_eps;
  row.report = metrics::full_report(model, id, mc);
  row.report.alpha1 = tc.alpha1;
  row.report.alpha2 = tc.alpha2;
  const std::string o1 = join(data, "ood1.csv"), o2 = join(data, "ood2.csv");
  row.ood1_acc = fs::exists(o1) ? mlp::evaluate(model, synth::load(o1)) : std::numeric_limits<double>::quiet_NaN();
  row.ood2_acc = fs::exists(o2) ? mlp::evaluate(model, synth::load(o2)) : std::numeric_limits<double>::quiet_NaN();

  const std::string path = o.str("out", "metrics.csv");
  write_file(path, [&](std::ostream& f) { metrics::write_rows(f, {row}); });
  out << "wrote " << path << '\n';
  return kExitOk;
}

std::vector<interv::Intervention> parse_which(const std::string& s) {
  if (s == "all") return {interv::Intervention::rotation, interv::Intervention::boost_fg, interv::Intervention::boost_bg};
  if (s == "boost") return {interv::Intervention::boost_fg, interv::Intervention::boost_bg};
  std::vector<interv::Intervention> v;
  for (const auto& part : text::split(s, ',')) v.push_back(interv::parse_intervention(text::trim(part)));
  return v;
}

interv::StudyResult run_studies(const std::vector<interv::StudyModel>& models, const std::vector<interv::Intervention>& which,
                                const std::vector<double>& gs, const interv::StudyConfig& base) {
  interv::StudyResult all;
  for (auto w : which) {
    const std::vector<double> grid = w == interv::Intervention::rotation ? std::vector<double>{base.g} : gs;
    for (double g : grid) {
      interv::StudyConfig cfg = base;
      cfg.g = g;
      const auto r = interv::run_intervention_study(models, w, cfg);
      all.rows.insert(all.rows.end(), r.rows.begin(), r.rows.end());
      all.ttests.insert(all.ttests.end(), r.ttests.begin(), r.ttests.end());
    }
  }
  return all;
}

std::vector<double> parse_g(const Options& o) {
  if (o.str("g", "") == "grid") return interv::boost_grid();
  return o.reals("g", {1.0 / 64});
}

int cmd_intervene(const Options& o, std::ostream& out) {
  const pop::SweepConfig sweep = sweep_config(o);
  const std::string dir = o.required("out");
  const auto which = parse_which(o.str("which", "all"));
  const auto gs = parse_g(o);
  for (double g : gs)
    if (!(g > 0.0)) throw InvalidArgument("boost factors must be positive");
  const int n_models = o.integer("n_models", 10);
  if (n_models < 2) throw InvalidArgument("n_models must be at least 2");
  make_dir(dir);

  const auto models = pop::reference_models(sweep, n_models);
  const auto result = run_studies(models, which, gs, study_config(o, derive_seed(sweep.master_seed, 0x1417)));
  write_file(join(dir, "study.csv"), [&](std::ostream& f) { interv::write_study_csv(f, result.rows); });
  write_file(join(dir, "ttests.csv"), [&](std::ostream& f) { interv::write_ttest_csv(f, result.ttests); });
  for (const auto& t : result.ttests)
    out << t.intervention << (t.intervention == "rotation" ? "" : " g=" + text::num(t.g)) << ' ' << t.quantity
        << " mean_delta=" << text::num(t.test.mean_difference) << " t=" << text::num(t.test.t)
        << " p=" << text::num(t.test.p_value) << '\n';
  return kExitOk;
}

int cmd_regress(const Options& o, std::ostream& out) {
  const std::string pop_path = o.required("population");
  require_file(pop_path);
  const std::string dir = o.required("out");
  const std::uint64_t seed = o.seed();
  const int n_boot = o.integer("n_boot", 1000);
  const pop::Target target = pop::parse_target(o.str("target", "avg_ood"));
  const std::string features = o.str("features", "all");
  std::vector<pop::FeatureSet> sets;
  if (features == "every") {
    sets = pop::all_feature_sets();
  } else {
    for (const auto& part : text::split(features, ',')) sets.push_back(pop::parse_feature_set(text::trim(part)));
  }
  make_dir(dir);

  const auto table = pop::PopulationTable::load(pop_path);
  std::vector<pop::RegressionStudy> studies;
  for (auto fs_ : sets) {
    studies.push_back(pop::regression_study(table, fs_, target, n_boot, seed));
    const auto& s = studies.back();
    write_file(join(dir, "regression_" + pop::to_string(fs_) + "_" + pop::to_string(target) + ".csv"),
               [&](std::ostream& f) { pop::write_coefficients(f, s); });
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: R2 = %.3f±%.3f (n_boot=%d%s)\n", pop::to_string(fs_).c_str(),
                  s.summary.mean_r2_test, s.summary.std_r2_test, s.summary.n_boot,
                  s.summary.full.ridge_fallback ? ", ridge fallback" : "");
    out << buf;
  }
  write_file(join(dir, "regression_summary_" + pop::to_string(target) + ".csv"),
             [&](std::ostream& f) { pop::write_regression_summary(f, studies); });
  return kExitOk;
}

std::vector<pop::Series> boost_series(const std::vector<interv::StudyRow>& rows) {
  std::vector<pop::Series> series;
  for (const char* which : {"boost_fg", "boost_bg"})
    for (const char* metric : {"ood1_acc", "ood2_acc"}) {
      std::map<double, std::vector<double>> by_g;
      for (const auto& r : rows)
        if (r.intervention == which && r.metric == metric) by_g[r.g].push_back(r.delta());
      pop::Series s{std::string(which) + " delta " + metric, {}, {}};
      for (const auto& [g, d] : by_g) {
        s.x.push_back(g);
        s.y.push_back(num::mean(d));
      }
      series.push_back(std::move(s));
    }
  return series;
}

int cmd_report(const Options& o, std::ostream& out) {
  const std::string pop_path = o.required("population");
  require_file(pop_path);
  const std::string dir = o.required("out");
  const int n_bins = o.integer("bins", 8);
  make_dir(dir);
  const auto table = pop::PopulationTable::load(pop_path);
  const auto rows = table.usable();

  const auto tradeoff = pop::tradeoff_study(table);
  write_file(join(dir, "tradeoff_scatter.dat"), [&](std::ostream& f) {
    pop::write_plot_data(f, "OOD1 vs OOD2 accuracy, pearson r=" + text::num(tradeoff.correlation.r) +
                                " p=" + text::num(tradeoff.correlation.p_value),
                         {{"models", tradeoff.ood1, tradeoff.ood2}});
  });

  std::vector<double> fbps;
  for (const auto& r : rows) fbps.push_back(r.report.fbps_kl_output);
  std::vector<pop::Series> fbps_series;
  for (const char* target : {"avg_ood", "ood1_acc", "ood2_acc"}) {
    std::vector<double> y;
    for (const auto& r : rows) y.push_back(pop::column(r, target));
    const auto bins = pop::binned_curve(fbps, y, n_bins);
    pop::Series mean{std::string(target) + " bin mean", {}, {}}, lo{std::string(target) + " bin mean - std", {}, {}},
        hi{std::string(target) + " bin mean + std", {}, {}};
    for (const auto& b : bins) {
      mean.x.push_back(b.center());
      mean.y.push_back(b.mean);
      const double sd = b.count > 1 ? b.std : 0.0;
      lo.x.push_back(b.center());
      lo.y.push_back(b.mean - sd);
      hi.x.push_back(b.center());
      hi.y.push_back(b.mean + sd);
    }
    fbps_series.push_back(std::move(mean));
    fbps_series.push_back(std::move(lo));
    fbps_series.push_back(std::move(hi));
    fbps_series.push_back({std::string(target) + " models", fbps, y});
  }
  write_file(join(dir, "fbps_curve.dat"),
             [&](std::ostream& f) { pop::write_plot_data(f, "output-layer FBPS (KL) vs accuracy", fbps_series); });

  const auto mixing = pop::mixing_curve(table);
  pop::Series m1{"ood1_acc", {}, {}}, m2{"ood2_acc", {}, {}}, ma{"avg_ood", {}, {}};
  for (const auto& p : mixing) {
    m1.x.push_back(p.alpha1);
    m1.y.push_back(p.ood1);
    m2.x.push_back(p.alpha1);
    m2.y.push_back(p.ood2);
    ma.x.push_back(p.alpha1);
    ma.y.push_back(0.5 * (p.ood1 + p.ood2));
  }
  write_file(join(dir, "mixing_weight.dat"),
             [&](std::ostream& f) { pop::write_plot_data(f, "mixing weight alpha1 vs OOD accuracy", {m1, m2, ma}); });

  std::vector<interv::StudyRow> study;
  if (o.has("study")) {
    require_file(o.str("study", ""));
    std::ifstream in(o.str("study", ""));
    study = interv::read_study_csv(in);
  } else {
    const pop::SweepConfig sweep = sweep_config(o);
    const auto models = pop::reference_models(sweep, o.integer("n_models", 10));
    study = run_studies(models, {interv::Intervention::boost_fg, interv::Intervention::boost_bg}, interv::boost_grid(),
                        study_config(o, derive_seed(sweep.master_seed, 0x1417)))
                .rows;
  }
  write_file(join(dir, "boost_factor.dat"), [&](std::ostream& f) {
    pop::write_plot_data(f, "boost factor g vs accuracy change (boosted - control)", boost_series(study));
  });
  out << "wrote 4 plot-data files to " << dir << '\n';
  return kExitOk;
}

// --- option wiring ------------------------------------------------------------

struct Spec {
  const char* flag;
  const char* key;
  const char* help;
};

const Spec kTrainSpecs[] = {{"--lr", "lr", "learning rate"},
                            {"--epochs", "epochs", "training epochs"},
                            {"--lr-decay-every", "lr_decay_every", "epochs between learning-rate drops"},
                            {"--lr-decay-factor", "lr_decay_factor", "learning-rate divisor"},
                            {"--batch-size", "batch_size", "mini-batch size"},
                            {"--alpha0", "alpha0", "task loss weight"},
                            {"--alpha1", "alpha1", "foreground augmentation weight"},
                            {"--alpha2", "alpha2", "background augmentation weight"}};

const Spec kMetricSpecs[] = {{"--probe-folds", "probe_folds", "probe CV folds"},
                             {"--probe-l2", "probe_l2", "probe L2 strength"},
                             {"--rsa-cap", "rsa_cap", "RSA items per block/class"},
                             {"--n-anchor", "n_anchor", "geometric-factorization anchors"},
                             {"--n-perturb", "n_perturb", "perturbations per anchor"},
                             {"--subspace-threshold", "subspace_threshold", "variance kept by the background subspace"},
                             {"--fbps-samples", "fbps_samples", "FBPS base samples"}};

const Spec kSweepSpecs[] = {{"--mode", "mode", "erm, augmentation or both"},
                            {"--p-co-grid", "p_co_grid", "comma-separated p_co values"},
                            {"--sigma-grid", "sigma_grid", "comma-separated sigma_eps values"},
                            {"--alpha-points", "alpha_points", "comma-separated a0:a1:a2 triples"},
                            {"--seeds-per-cell", "seeds_per_cell", "augmentation replicates"},
                            {"--alpha-cell-p-co", "alpha_cell_p_co", "p_co of the augmentation cell"},
                            {"--alpha-cell-sigma", "alpha_cell_sigma", "sigma_eps of the augmentation cell"},
                            {"--n-train", "n_train", "training samples per model"},
                            {"--n-test", "n_test", "test samples per split"}};

const Spec kSpecSpecs[] = {{"--p-co", "p_co", "co-occurrence probability"},
                           {"--sigma-eps", "sigma_eps", "causal noise"},
                           {"--n", "n", "samples per split"}};

struct Wiring {
  Settings flags;
  std::string config;
};

void add_keys(CLI::App* app, Wiring& w, const Spec* begin, const Spec* end) {
  for (const Spec* s = begin; s != end; ++s) {
    const std::string key = s->key;
    app->add_option_function<std::string>(s->flag, [&w, key](const std::string& v) { w.flags[key] = v; }, s->help);
  }
}

template <std::size_t N>
void add_keys(CLI::App* app, Wiring& w, const Spec (&specs)[N]) {
  add_keys(app, w, specs, specs + N);
}

void add_common(CLI::App* app, Wiring& w) {
  app->add_option("--config", w.config, "key=value config file");
  add_keys(app, w, {Spec{"--seed", "seed", "master seed (falls back to CTXLAB_SEED)"}});
  add_keys(app, w, {Spec{"--out", "out", "output path"}});
  add_keys(app, w, {Spec{"--threads", "threads", "worker cap (default: all cores)"}});
}

template <std::size_t N>
void add_keys(CLI::App* app, Wiring& w, std::initializer_list<Spec> specs) {
  add_keys(app, w, specs.begin(), specs.end());
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ctxlab: synthetic contextual-perception laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ctxlab 1.0.0");

  std::map<std::string, Wiring> wiring;
  std::map<std::string, CLI::App*> subs;
  auto sub = [&](const char* name, const char* help) {
    CLI::App* s = app.add_subcommand(name, help);
    subs[name] = s;
    add_common(s, wiring[name]);
    return s;
  };
  auto flag = [&](CLI::App* s, const char* name, const char* flag_name, const char* key, const char* help) {
    Wiring& w = wiring[name];
    const std::string k = key;
    s->add_flag_callback(flag_name, [&w, k] { w.flags[k] = "1"; }, help);
  };

  CLI::App* gen = sub("gen", "generate train/ID/OOD1/OOD2 datasets");
  add_keys(gen, wiring["gen"], kSpecSpecs);

  CLI::App* train = sub("train", "train one model on a generated dataset directory");
  add_keys(train, wiring["train"], {Spec{"--data", "data", "dataset directory from gen"}});
  add_keys(train, wiring["train"], kTrainSpecs);

  CLI::App* sweep = sub("sweep", "train and evaluate a population of models");
  add_keys(sweep, wiring["sweep"], kSweepSpecs);
  add_keys(sweep, wiring["sweep"], kTrainSpecs);
  add_keys(sweep, wiring["sweep"], kMetricSpecs);

  CLI::App* met = sub("metrics", "compute the metric report of one checkpoint");
  add_keys(met, wiring["metrics"], {Spec{"--model", "model", "checkpoint JSON"}, Spec{"--data", "data", "dataset directory"},
                                    Spec{"--model-id", "model_id", "row identifier"}});
  add_keys(met, wiring["metrics"], kMetricSpecs);

  CLI::App* inter = sub("intervene", "run rotation and boost interventions on reference ERM models");
  add_keys(inter, wiring["intervene"],
           {Spec{"--which", "which", "rotation, boost_fg, boost_bg, boost or all"},
            Spec{"--g", "g", "boost factor(s), comma-separated, or 'grid'"}, Spec{"--n-models", "n_models", "models"},
            Spec{"--l2", "l2", "retrained-head L2 strength"}, Spec{"--folds", "folds", "CV folds"},
            Spec{"--n-eval", "n_eval", "evaluation samples"},
            Spec{"--n-rotation", "n_rotation", "samples for class centers and intra-class PCs"}});
  flag(inter, "intervene", "--literal-rotation", "literal_rotation", "use the raw low-rank transform");
  add_keys(inter, wiring["intervene"], kSweepSpecs);
  add_keys(inter, wiring["intervene"], kTrainSpecs);
  add_keys(inter, wiring["intervene"], kMetricSpecs);

  CLI::App* reg = sub("regress", "bootstrap regression of OOD accuracy on metrics");
  add_keys(reg, wiring["regress"],
           {Spec{"--population", "population", "population CSV"},
            Spec{"--features", "features", "feature set(s), comma-separated, or 'every'"},
            Spec{"--target", "target", "avg, ood1 or ood2"}, Spec{"--n-boot", "n_boot", "bootstrap replicates"}});

  CLI::App* rep = sub("report", "write plot-data files");
  add_keys(rep, wiring["report"],
           {Spec{"--population", "population", "population CSV"}, Spec{"--study", "study", "boost study CSV"},
            Spec{"--bins", "bins", "FBPS bins"}, Spec{"--n-models", "n_models", "models for the boost sweep"},
            Spec{"--l2", "l2", "retrained-head L2 strength"}});
  add_keys(rep, wiring["report"], kSweepSpecs);
  add_keys(rep, wiring["report"], kTrainSpecs);
  add_keys(rep, wiring["report"], kMetricSpecs);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  static const std::map<std::string, int (*)(const Options&, std::ostream&)> commands = {
      {"gen", cmd_gen},         {"train", cmd_train},     {"sweep", cmd_sweep},  {"metrics", cmd_metrics},
      {"intervene", cmd_intervene}, {"regress", cmd_regress}, {"report", cmd_report}};
  for (const auto& [name, s] : subs) {
    if (!s->parsed()) continue;
    const Wiring& w = wiring[name];
    try {
      Settings merged = w.config.empty() ? Settings{} : read_config(w.config);
      for (const auto& [k, v] : w.flags) merged[k] = v;
      return commands.at(name)(Options(std::move(merged)), out);
    } catch (const InvalidArgument& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const IoError& e) {
      err << "error: " << e.what() << '\n';
      return kExitUsage;
    } catch (const DegenerateError& e) {
      err << "numerical degeneracy: " << e.what() << '\n';
      return kExitDegenerate;
    }
  }
  err << "error: no command given\n";
  return kExitUsage;
}

}  // namespace ctxlab::cli
