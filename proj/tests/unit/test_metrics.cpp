#include "doctest.h"

#include "ctxlab/metrics.hpp"
#include "ctxlab/numerics/stats.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

using namespace ctxlab;
using namespace ctxlab::metrics;

namespace {

// Anchors spread along the first two axes; perturbations are +/- pairs so
// that each anchor mean is exactly its anchor point.
Matrix anchored_reps(int n_anchor, int n_perturb, bool perturb_in_background, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix reps = Matrix::Zero(n_anchor * n_perturb, 5);
  for (int a = 0; a < n_anchor; ++a) {
    const double u = 10 * g(rng), v = 10 * g(rng);
    for (int k = 0; k < n_perturb; k += 2) {
      Eigen::RowVectorXd d = Eigen::RowVectorXd::Zero(5);
      if (perturb_in_background) {
        d(0) = g(rng);
        d(1) = g(rng);
      } else {
        d(2) = g(rng);
        d(3) = g(rng);
        d(4) = g(rng);
      }
      reps.row(a * n_perturb + k) << u, v, 0, 0, 0;
      reps.row(a * n_perturb + k + 1) = reps.row(a * n_perturb + k);
      reps.row(a * n_perturb + k) += d;
      reps.row(a * n_perturb + k + 1) -= d;
    }
  }
  return reps;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

TEST_CASE("geometric factorization is 1 for orthogonal foreground variance") {
  const Matrix reps = anchored_reps(40, 20, false, 1);
  CHECK(std::fabs(geometric_factorization(reps, 40, 20, 0.99) - 1.0) < 1e-6);
}

TEST_CASE("geometric factorization is 0 when perturbations live in the background subspace") {
  const Matrix reps = anchored_reps(40, 20, true, 2);
  CHECK(std::fabs(geometric_factorization(reps, 40, 20, 0.99)) < 1e-6);
}

TEST_CASE("geometric factorization is invariant to rotations and throws without variance") {
  const Matrix reps = anchored_reps(30, 10, false, 3) + anchored_reps(30, 10, true, 4);
  const Matrix q = Eigen::HouseholderQR<Matrix>(Matrix::Random(5, 5)).householderQ();
  CHECK(geometric_factorization(reps * q, 30, 10) == doctest::Approx(geometric_factorization(reps, 30, 10)).epsilon(1e-9));
  Matrix flat(20, 3);
  for (int i = 0; i < 20; ++i) flat.row(i) << i / 10, 1, 2;
  CHECK_THROWS_AS(geometric_factorization(flat, 2, 10), DegenerateError);
}

TEST_CASE("four-item RDM against hand computation") {
  Matrix reps(4, 2);
  reps << 0, 0, 3, 4, 6, 8, 0, 1;
  const Matrix rdm = euclidean_rdm(reps);
  const double expect[4][4] = {{0, 5, 10, 1},
                               {5, 0, 5, std::sqrt(18.0)},
                               {10, 5, 0, std::sqrt(85.0)},
                               {1, std::sqrt(18.0), std::sqrt(85.0), 0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) CHECK(std::fabs(rdm(i, j) - expect[i][j]) < 1e-12);

  const Matrix ref = reference_rdm({0, 0, 1, 1});
  CHECK(ref(0, 1) == 0.0);
  CHECK(ref(0, 2) == 1.0);
  CHECK(ref(2, 3) == 0.0);
  // Upper triangle (5, 10, 1, 5, sqrt18, sqrt85) against (0, 1, 1, 1, 1, 0).
  const std::vector<double> a = {5, 10, 1, 5, std::sqrt(18.0), std::sqrt(85.0)};
  const std::vector<double> b = {0, 1, 1, 1, 1, 0};
  CHECK(rdm_correlation(rdm, ref) == doctest::Approx(num::pearson(a, b).r).epsilon(1e-12));
}

TEST_CASE("RSA is 1 on reference-proportional RDMs") {
  const Labels group = {0, 0, 1, 1, 2, 2, 3, 3, 3};
  Matrix reps = Matrix::Zero(9, 4);
  for (int i = 0; i < 9; ++i) reps(i, group[i]) = 2.5;
  CHECK(rdm_correlation(euclidean_rdm(reps), reference_rdm(group)) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("capped subsample") {
  Labels label;
  for (int i = 0; i < 50; ++i) label.push_back(i % 3 == 0 ? 1 : 0);
  const auto idx = capped_subsample(label, 10, 4);
  std::map<int, int> count;
  for (int i : idx) ++count[label[i]];
  CHECK(count[0] == 10);
  CHECK(count[1] == 10);
  for (std::size_t k = 1; k < idx.size(); ++k) CHECK(label[idx[k - 1]] <= label[idx[k]]);
  CHECK(capped_subsample(label, 10, 4) == idx);
}

TEST_CASE("probe accuracy on separable and shuffled representations") {
  MetricConfig cfg;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 0.05);
  const int n = 2000;
  Matrix reps(n, 4);
  Labels label(n), shuffled(n);
  for (int i = 0; i < n; ++i) {
    label[i] = i % 4;
    for (int j = 0; j < 4; ++j) reps(i, j) = (j == label[i] ? 3.0 : 0.0) + g(rng);
  }
  CHECK(probe_accuracy(reps, label, cfg).value == 1.0);
  shuffled = label;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  CHECK(std::fabs(probe_accuracy(reps, shuffled, cfg).value - 0.25) <= 0.04);

  const auto zero = probe_accuracy(Matrix::Zero(n, 4), label, cfg);
  CHECK(zero.degenerate);
  CHECK(zero.value == 0.25);
}

TEST_CASE("block-only probe set stacks causal then spurious copies") {
  synth::EnvironmentSpec s;
  s.n_samples = 30;
  s.seed = 2;
  const auto ds = synth::generate(s);
  const auto ps = block_only_probe_set(ds);
  REQUIRE(ps.x.rows() == 60);
  for (int i = 0; i < 30; ++i) {
    CHECK(ps.label[i] == ds.z_c[i]);
    CHECK(ps.label[30 + i] == 2 + ds.z_s[i]);
  }
}

TEST_CASE("anchored inputs share the anchored blocks within each group") {
  synth::EnvironmentSpec s;
  const auto in = anchored_inputs(s, synth::Block::spurious, 12, 10, 5);
  REQUIRE(in.x.rows() == 120);
  CHECK(in.anchor_class.size() == 12);
  for (int a = 0; a < 12; ++a)
    for (int k = 1; k < 10; ++k) {
      const auto r0 = in.x.row(a * 10), rk = in.x.row(a * 10 + k);
      CHECK(rk.tail(10) == r0.tail(10));
      CHECK(rk.head(80) == r0.head(80));
      CHECK(rk.segment(80, 10) != r0.segment(80, 10));
    }
  const auto c = anchored_inputs(s, synth::Block::causal, 12, 10, 5);
  CHECK(c.x.row(0).segment(80, 10) == c.x.row(9).segment(80, 10));
}

TEST_CASE("flip sets change exactly one block to the opposite class") {
  synth::EnvironmentSpec s;
  s.sigma_c = 1e-9;
  s.sigma_s = 1e-9;
  const auto f = flip_set(s, 50, 3);
  for (int i = 0; i < 50; ++i) {
    CHECK(f.fg_flipped.row(i).tail(10) == f.base.row(i).tail(10));
    CHECK(f.fg_flipped.row(i).head(80) == f.base.row(i).head(80));
    CHECK(std::fabs(f.fg_flipped(i, 85) - f.base(i, 85)) == doctest::Approx(0.6));
    CHECK(f.bg_flipped.row(i).head(90) == f.base.row(i).head(90));
    CHECK(std::fabs(f.bg_flipped(i, 95) - f.base(i, 95)) == doctest::Approx(0.6));
  }
}

TEST_CASE("mean distance") {
  Matrix a(2, 2), b(2, 2);
  a << 0.5, 0.5, 0.9, 0.1;
  b << 0.25, 0.75, 0.9, 0.1;
  const double kl = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  CHECK(mean_distance(a, b, Distance::kl) == doctest::Approx(kl / 2).epsilon(1e-12));
  CHECK(mean_distance(a, b, Distance::l2) == doctest::Approx(std::sqrt(2 * 0.0625) / 2).epsilon(1e-12));
  const auto f = fbps(a, b, a, Distance::l2);
  CHECK(f.delta_bg == 0.0);
  CHECK(f.score == f.delta_fg);
}

TEST_CASE("FBPS of a causal-sum readout follows the folded normal") {
  synth::EnvironmentSpec s;
  s.mu_c0 = 0.45;
  s.mu_c1 = 0.55;
  MetricConfig cfg;
  cfg.fbps_samples = 20000;
  cfg.seed = 6;
  const RepresentationFn f = [](const Matrix& x) { return Matrix(x.middleCols(80, 10).rowwise().sum()); };
  const auto r = fbps(f, s, Distance::l2, cfg);
  // Difference of two 10-coordinate sums: N(+/-1.0, 10 * 2 * 0.2^2).
  const double mu = 1.0, sd = std::sqrt(0.8);
  const double folded = sd * std::sqrt(2 / std::numbers::pi) * std::exp(-mu * mu / (2 * sd * sd)) + mu * (1 - 2 * normal_cdf(-mu / sd));
  CHECK(r.delta_bg == 0.0);
  CHECK(std::fabs(r.delta_fg - folded) < 4 * sd / std::sqrt(20000.0));
}

TEST_CASE("FBPS vanishes for a block-symmetric model") {
  synth::EnvironmentSpec s;
  const RepresentationFn f = [](const Matrix& x) {
    Matrix out(x.rows(), 2);
    out.col(0) = x.middleCols(80, 10).rowwise().sum();
    out.col(1) = x.middleCols(90, 10).rowwise().sum();
    return out;
  };
  MetricConfig cfg;
  cfg.seed = 12;
  const auto set = flip_set(s, cfg.fbps_samples, 99);
  const Matrix base = f(set.base), fg = f(set.fg_flipped), bg = f(set.bg_flipped);
  std::vector<double> diff;
  for (int i = 0; i < base.rows(); ++i) diff.push_back((fg.row(i) - base.row(i)).norm() - (bg.row(i) - base.row(i)).norm());
  const double tol = 4 * num::stddev(diff) / std::sqrt(static_cast<double>(diff.size()));
  CHECK(std::fabs(fbps(base, fg, bg, Distance::l2).score) < tol);
  CHECK(std::fabs(fbps(f, s, Distance::l2, cfg).score) < tol);
}

TEST_CASE("full report of a trained model and CSV round trip") {
  synth::EnvironmentSpec s;
  s.n_samples = 300;
  s.seed = 4;
  const auto ds = synth::generate(s);
  mlp::TrainConfig tc;
  tc.epochs = 30;
  tc.seed = 4;
  const auto m = mlp::train(ds, tc);
  MetricConfig cfg;
  cfg.n_anchor = 40;
  cfg.n_perturb = 10;
  cfg.fbps_samples = 500;
  cfg.seed = 1;
  const auto r = full_report(m, ds, cfg);
  for (double p : r.probe_acc) CHECK((p >= 0.0 && p <= 1.0));
  for (double v : r.rsa_r) CHECK((v >= -1.0 && v <= 1.0));
  for (double v : r.geom_factorization) CHECK(v <= 1.0 + 1e-12);
  CHECK(r.id_accuracy == doctest::Approx(mlp::evaluate(m, ds)));
  CHECK(full_report(m, ds, cfg) == r);

  MetricRow row{"m0", 0.9, 0.0, 0.4, 0.6, r};
  std::stringstream csv;
  write_rows(csv, {row, row});
  const auto back = read_rows(csv);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == row);
  const std::string header = csv_header();
  CHECK(std::count(header.begin(), header.end(), ',') == 21);
  CHECK_THROWS_AS(parse_csv_row("a,1,2"), IoError);
}
