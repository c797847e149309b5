#include "doctest.h"
#include "oracles.hpp"

#include "ctxlab/population.hpp"

#include <cmath>
#include <random>
#include <set>
#include <sstream>

using namespace ctxlab;
using namespace ctxlab::pop;

namespace {

PopulationTable synthetic_table(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PopulationTable t;
  for (int i = 0; i < n; ++i) {
    metrics::MetricRow r;
    r.model_id = "erm_" + std::to_string(i);
    r.p_co = 0.5 + 0.4 * u(rng);
    r.sigma_eps = u(rng);
    r.report.id_accuracy = 0.7 + 0.2 * u(rng);
    for (int k = 0; k < 3; ++k) {
      r.report.probe_acc[k] = u(rng);
      r.report.rsa_r[k] = u(rng);
      r.report.geom_factorization[k] = u(rng);
      r.report.fbps_l2[k] = u(rng);
    }
    r.report.fbps_kl_output = u(rng) - 0.5;
    r.ood1_acc = 0.5 + 0.4 * r.report.fbps_kl_output + 0.02 * u(rng);
    r.ood2_acc = 1.2 - r.ood1_acc + 0.05 * u(rng);
    t.rows.push_back(r);
  }
  return t;
}

}  // namespace

TEST_CASE("linspace and default alpha points") {
  const auto v = linspace(0.5, 0.98, 14);
  REQUIRE(v.size() == 14);
  CHECK(v.front() == 0.5);
  CHECK(v.back() == 0.98);
  CHECK(v[1] - v[0] == doctest::Approx(0.48 / 13));
  const auto a = SweepConfig::default_alpha_points();
  REQUIRE(a.size() == 11);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].alpha0 == 1.0);
    CHECK(a[i].alpha1 == doctest::Approx(0.1 * i));
    CHECK(a[i].alpha1 + a[i].alpha2 == doctest::Approx(1.0));
  }
}

TEST_CASE("sweep cells cover the grid and the alpha replicates") {
  SweepConfig cfg;
  const auto cells = sweep_cells(cfg);
  CHECK(cells.size() == 196 + 110);
  std::set<std::string> ids;
  for (const auto& c : cells) ids.insert(c.model_id());
  CHECK(ids.size() == cells.size());
  CHECK(cells.front().model_id() == "erm_p00_s00");

  cfg.mode = SweepMode::erm;
  CHECK(sweep_cells(cfg).size() == 196);
  cfg.mode = SweepMode::augmentation;
  const auto aug = sweep_cells(cfg);
  CHECK(aug.size() == 110);
  for (const auto& c : aug) {
    CHECK(c.p_co == 0.9);
    CHECK(c.sigma_eps == 1.2);
  }
  const auto refs = reference_cells(cfg, 10);
  CHECK(refs.size() == 10);
  CHECK(refs[3].model_id() == "ref_r03");
}

TEST_CASE("alpha points of one replicate share data and initialization") {
  SweepConfig cfg;
  cfg.mode = SweepMode::augmentation;
  cfg.n_train = 50;
  cfg.n_test = 20;
  cfg.master_seed = 77;
  const auto cells = sweep_cells(cfg);
  const Cell* a = nullptr;
  const Cell* b = nullptr;
  const Cell* other = nullptr;
  for (const auto& c : cells) {
    if (c.seed_index == 2 && c.alpha_index == 0) a = &c;
    if (c.seed_index == 2 && c.alpha_index == 7) b = &c;
    if (c.seed_index == 3 && c.alpha_index == 0) other = &c;
  }
  REQUIRE(a);
  REQUIRE(b);
  REQUIRE(other);
  CHECK(cell_data(cfg, *a).train.x == cell_data(cfg, *b).train.x);
  CHECK(cell_train_config(cfg, *a).seed == cell_train_config(cfg, *b).seed);
  CHECK(cell_train_config(cfg, *b).alpha1 == doctest::Approx(0.7));
  CHECK(cell_data(cfg, *a).train.x != cell_data(cfg, *other).train.x);
  const auto d = cell_data(cfg, *a);
  CHECK(d.ood1.spec.p_co == 0.0);
  CHECK(d.ood2.spec.sigma_eps == 1.5);
  CHECK(d.id.x != d.train.x);
}

TEST_CASE("config validation and mode names") {
  SweepConfig cfg;
  cfg.p_co_grid = {1.2};
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  CHECK(parse_sweep_mode("aug") == SweepMode::augmentation);
  CHECK(parse_sweep_mode(to_string(SweepMode::both)) == SweepMode::both);
  CHECK_THROWS_AS(parse_sweep_mode("sideways"), InvalidArgument);
}

TEST_CASE("run_cell trains and evaluates one model") {
  SweepConfig cfg;
  cfg.mode = SweepMode::erm;
  cfg.p_co_grid = {0.9};
  cfg.sigma_grid = {0.8};
  cfg.n_train = 200;
  cfg.n_test = 200;
  cfg.train.epochs = 30;
  cfg.metrics.n_anchor = 20;
  cfg.metrics.n_perturb = 10;
  cfg.metrics.fbps_samples = 300;
  cfg.master_seed = 3;
  const auto cells = sweep_cells(cfg);
  REQUIRE(cells.size() == 1);
  const auto r = run_cell(cfg, cells[0]);
  CHECK(r.row.model_id == "erm_p00_s00");
  CHECK(r.row.report.flags == 0);
  CHECK((r.row.ood1_acc >= 0 && r.row.ood1_acc <= 1));
  CHECK(run_cell(cfg, cells[0]).row == r.row);
  const auto sweep = run_sweep(cfg);
  REQUIRE(sweep.table.rows.size() == 1);
  CHECK(sweep.table.rows[0] == r.row);
}

TEST_CASE("sweep results do not depend on the worker count") {
  SweepConfig cfg;
  cfg.p_co_grid = {0.6, 0.9};
  cfg.sigma_grid = {0.8};
  cfg.alpha_points = {{1, 0, 1}, {1, 1, 0}};
  cfg.seeds_per_cell = 1;
  cfg.n_train = 150;
  cfg.n_test = 100;
  cfg.train.epochs = 10;
  cfg.metrics.n_anchor = 10;
  cfg.metrics.n_perturb = 10;
  cfg.metrics.fbps_samples = 100;
  cfg.master_seed = 8;
  cfg.threads = 1;
  const auto serial = run_sweep(cfg);
  cfg.threads = 3;
  const auto threaded = run_sweep(cfg);
  REQUIRE(serial.table.rows.size() == 4);
  CHECK(threaded.table.rows == serial.table.rows);
}

TEST_CASE("population table round trip and usable rows") {
  auto t = synthetic_table(5, 1);
  t.rows[2].report.flags = metrics::kFlagTrainingFailed;
  std::stringstream s;
  t.write(s);
  const auto back = PopulationTable::read(s);
  REQUIRE(back.rows.size() == 5);
  CHECK(back.rows[4] == t.rows[4]);
  CHECK(back.usable().size() == 4);
}

TEST_CASE("tradeoff study") {
  const auto t = synthetic_table(40, 2);
  const auto s = tradeoff_study(t);
  CHECK(s.ood1.size() == 40);
  CHECK(s.correlation.r < -0.9);
  CHECK_THROWS_AS(tradeoff_study(synthetic_table(5, 3)), InvalidArgument);
}

TEST_CASE("feature sets and design matrix") {
  CHECK(feature_names(FeatureSet::id_only).size() == 1);
  CHECK(feature_names(FeatureSet::id_obj).size() == 3);
  CHECK(feature_names(FeatureSet::id_obj_factor).size() == 12);
  CHECK(feature_names(FeatureSet::id_obj_ftwgt).size() == 7);
  CHECK(feature_names(FeatureSet::all).size() == 16);
  for (auto fs : all_feature_sets()) CHECK(parse_feature_set(to_string(fs)) == fs);
  CHECK(parse_target("ood1") == Target::ood1);
  CHECK(to_string(Target::avg_ood) == "avg_ood");

  const auto t = synthetic_table(12, 4);
  const auto d = design_matrix(t, FeatureSet::all, Target::avg_ood);
  CHECK(d.x.rows() == 12);
  CHECK(d.x.cols() == 16);
  CHECK(d.y(3) == doctest::Approx(t.rows[3].avg_ood()));
  for (std::size_t k = 0; k < d.names.size(); ++k) CHECK(d.x(5, k) == column(t.rows[5], d.names[k]));
}

TEST_CASE("regression study ranks the informative feature set higher") {
  const auto t = synthetic_table(200, 5);
  const auto id = regression_study(t, FeatureSet::id_only, Target::ood1, 100, 9);
  const auto all = regression_study(t, FeatureSet::all, Target::ood1, 100, 9);
  CHECK(all.summary.mean_r2_test > 0.9);
  CHECK(id.summary.mean_r2_test < 0.1);
  std::stringstream coef, summary;
  write_coefficients(coef, all);
  write_regression_summary(summary, {id, all});
  std::string line;
  std::getline(coef, line);
  CHECK(line == "feature,coef,p_value");
  std::getline(coef, line);
  CHECK(line.rfind("intercept,", 0) == 0);
  std::getline(summary, line);
  CHECK(line == "feature_set,mean_r2,std_r2,n_boot");
}

TEST_CASE("binned curve and argmax bin") {
  const std::vector<double> x = {0, 1, 2, 3, 4, 5, 6, 7, 8};
  const std::vector<double> y = {1, 1, 2, 2, 9, 9, 3, 3, 3};
  const auto bins = binned_curve(x, y, 4);
  REQUIRE(bins.size() == 4);
  CHECK(bins[0].lo == 0.0);
  CHECK(bins[3].hi == 8.0);
  CHECK(bins[0].count == 2);
  CHECK(bins[3].count == 3);
  CHECK(bins[3].mean == 3.0);
  CHECK(argmax_bin(bins) == 2);

  const auto gap = binned_curve({0.0, 10.0}, {1.0, 2.0}, 3);
  CHECK(std::isnan(gap[1].mean));
  CHECK(argmax_bin(gap) == 2);
}

TEST_CASE("mixing curve averages augmentation rows per alpha1") {
  PopulationTable t;
  for (int r = 0; r < 2; ++r)
    for (int a = 0; a < 3; ++a) {
      metrics::MetricRow row;
      row.model_id = "aug_a0" + std::to_string(a) + "_r0" + std::to_string(r);
      row.report.alpha1 = 0.5 * a;
      row.report.alpha2 = 1 - 0.5 * a;
      row.ood1_acc = a + r;
      row.ood2_acc = -a;
      t.rows.push_back(row);
    }
  t.rows.push_back({"erm_p00_s00", 0.9, 1.0, 0.0, 0.0, {}});
  const auto m = mixing_curve(t);
  REQUIRE(m.size() == 3);
  CHECK(m[1].alpha1 == 0.5);
  CHECK(m[1].ood1 == 1.5);
  CHECK(m[2].ood2 == -2.0);
  CHECK(m[0].n == 2);
}

TEST_CASE("plot data format") {
  std::stringstream s;
  write_plot_data(s, "title", {{"a", {1, 2}, {3, std::nan("")}}, {"b", {0}, {1}}});
  CHECK(s.str() == "# title\n# series: a\n# x y\n1 3\n\n\n\n# series: b\n# x y\n0 1\n");
}
