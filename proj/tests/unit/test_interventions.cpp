#include "doctest.h"

#include "ctxlab/interventions.hpp"
#include "ctxlab/numerics/pca.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace ctxlab;
using namespace ctxlab::interv;

namespace {

// Two classes separated along e1; within-class spread mostly along e2, then e3.
void two_class_reps(Matrix& reps, Labels& cls, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 400;
  reps = Matrix::Zero(n, dim);
  cls.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    cls[i] = i % 2;
    reps(i, 0) = cls[i] == 0 ? -4.0 : 4.0;
    reps(i, 1) = 2.0 * g(rng);
    reps(i, 2) = 0.5 * g(rng);
    for (int j = 3; j < dim; ++j) reps(i, j) = 0.05 * g(rng);
  }
}

}  // namespace

TEST_CASE("rotation maps the inter-class axis onto the top intra-class axis") {
  Matrix reps;
  Labels cls;
  two_class_reps(reps, cls, 5, 1);
  const auto plan = build_rotation(reps, cls);
  REQUIRE(plan.paired == 1);
  const Matrix& t = plan.transform;
  CHECK((t.transpose() * t - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(t.determinant() == doctest::Approx(1.0));

  const Vector a = plan.u_inter.row(0).transpose();
  const Vector b = plan.u_intra.row(0).transpose();
  CHECK(std::fabs(std::fabs(a(0)) - 1.0) < 0.01);
  CHECK(std::fabs(std::fabs(b(1)) - 1.0) < 0.01);
  CHECK(a.dot(b) >= 0.0);
  CHECK(((t * a) - b).norm() < 1e-10);
  // Directions outside span{a, b} are untouched.
  Matrix ab(5, 2);
  ab << a, b;
  const Matrix q = Eigen::HouseholderQR<Matrix>(ab).householderQ();
  for (int k = 2; k < 5; ++k) CHECK(((t * q.col(k)) - q.col(k)).norm() < 1e-10);
}

TEST_CASE("literal rotation is the rank-deficient outer product") {
  Matrix reps;
  Labels cls;
  two_class_reps(reps, cls, 4, 2);
  const auto plan = build_rotation(reps, cls, true);
  const Matrix expect = plan.u_intra.topRows(1).transpose() * plan.u_inter.topRows(1);
  CHECK((plan.transform - expect).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::FullPivLU<Matrix> lu(plan.transform);
  CHECK(lu.rank() == 1);
}

TEST_CASE("rotation preconditions") {
  Matrix reps;
  Labels cls;
  two_class_reps(reps, cls, 4, 3);
  CHECK_THROWS_AS(build_rotation(reps, Labels(reps.rows(), 0)), InvalidArgument);
  Matrix same = reps;
  for (int i = 1; i < same.rows(); i += 2) same.row(i) = same.row(i - 1);
  CHECK_THROWS_AS(build_rotation(same, cls), DegenerateError);
}

TEST_CASE("rotations preserve distances and center rotation moves only the center component") {
  Matrix reps;
  Labels cls;
  two_class_reps(reps, cls, 5, 4);
  const auto plan = build_rotation(reps, cls);
  const Matrix rotated = apply_rotation(plan, reps);
  CHECK(((rotated.row(3) - rotated.row(8)).norm()) == doctest::Approx((reps.row(3) - reps.row(8)).norm()));

  const Matrix centered = apply_center_rotation(plan, reps);
  const Vector a = plan.u_inter.row(0).transpose();
  for (int i = 0; i < 10; ++i) {
    const Vector x = reps.row(i).transpose();
    const Vector c = x - plan.origin;
    const Vector expect = x + (plan.transform - Matrix::Identity(5, 5)) * (a * a.dot(c));
    CHECK((centered.row(i).transpose() - expect).norm() < 1e-10);
  }
  const auto id = identity_rotation(5);
  CHECK(apply_rotation(id, reps) == reps);
  CHECK((apply_center_rotation(id, reps) - reps).norm() == 0.0);
}

TEST_CASE("subspace importance and boost weights") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix means(60, 4);
  for (int i = 0; i < 60; ++i) means.row(i) << 3 * g(rng), 3 * g(rng), 0.01 * g(rng), 0.0;
  const Vector e = subspace_importance(means);
  CHECK(e.mean() == doctest::Approx(1.0));
  CHECK((e.array() >= 0).all());
  CHECK(e(0) > 10 * e(2));
  CHECK(e(3) == doctest::Approx(0.0));

  const auto p = num::pca(means);
  Vector expect = Vector::Zero(4);
  for (int j = 0; j < p.size(); ++j) expect += p.components.row(j).transpose().cwiseAbs() * std::sqrt(p.explained_ratio(j));
  expect /= expect.mean();
  CHECK((e - expect).cwiseAbs().maxCoeff() < 1e-12);

  const auto plan = build_boost(means, Target::foreground, 1.0 / 64);
  const Vector w = plan.weights();
  for (int i = 0; i < 4; ++i) CHECK(w(i) == doctest::Approx(std::pow(1.0 / 64, e(i) / e.maxCoeff())));
  CHECK(w.minCoeff() == doctest::Approx(1.0 / 64));
  CHECK(w(3) == doctest::Approx(1.0));
  CHECK_THROWS_AS(build_boost(means, Target::foreground, 0.0), InvalidArgument);
  CHECK_THROWS_AS(build_boost(Matrix::Ones(5, 4), Target::background, 2.0), DegenerateError);
}

TEST_CASE("boost retraining: identity factor equals control, suppressing a subspace moves accuracy") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = 300;
  Matrix reps(n, 3);
  Labels y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 2;
    reps.row(i) << (y[i] ? 1.0 : -1.0) + 0.5 * g(rng), g(rng), g(rng);
  }
  Matrix signal_means(20, 3);
  for (int i = 0; i < 20; ++i) signal_means.row(i) << g(rng), 0.0, 0.0;
  const std::vector<EvalSet> eval = {{reps, y}};

  BoostPlan same = build_boost(signal_means, Target::foreground, 1.0);
  const auto r1 = apply_boost_and_retrain(same, reps, y, eval, 1.0, 5, 3);
  REQUIRE(r1.size() == 2);
  CHECK(r1[0].delta() == 0.0);

  BoostPlan down = build_boost(signal_means, Target::foreground, 1.0 / 64);
  const auto r2 = apply_boost_and_retrain(down, reps, y, eval, 1.0, 5, 3);
  CHECK(r2[0].boosted < r1[0].boosted - 0.2);
  CHECK(r2[1].boosted < r1[1].boosted - 0.2);
  CHECK(apply_boost_and_retrain(down, reps, y, eval, 1.0, 5, 3)[0].boosted == r2[0].boosted);

  // Shrinking only the noise directions favors the signal relative to the matched-scale control.
  Matrix noise_means(20, 3);
  for (int i = 0; i < 20; ++i) noise_means.row(i) << 0.0, g(rng), g(rng);
  const auto noise = build_boost(noise_means, Target::background, 1.0 / 64);
  CHECK(noise.control_scale() == doctest::Approx(noise.weights().mean()));
  const auto r3 = apply_boost_and_retrain(noise, reps, y, eval, 1.0, 5, 3);
  CHECK(r3[0].boosted > r3[0].control);
}

TEST_CASE("a uniform boost equals its control") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix reps(120, 4);
  Labels y(120);
  for (int i = 0; i < 120; ++i) {
    y[i] = i % 3;
    for (int j = 0; j < 4; ++j) reps(i, j) = g(rng) + (j == y[i] ? 1.0 : 0.0);
  }
  BoostPlan plan;
  plan.importance = Vector::Ones(4);
  plan.g = 1.0 / 16;
  CHECK(plan.control_scale() == doctest::Approx(1.0 / 16).epsilon(1e-15));
  const auto r = apply_boost_and_retrain(plan, reps, y, {{reps, y}}, 1.0, 5, 2);
  for (const auto& a : r) CHECK(std::fabs(a.boosted - a.control) < 1e-12);
}

TEST_CASE("intervention names and grid") {
  for (auto w : {Intervention::rotation, Intervention::boost_fg, Intervention::boost_bg})
    CHECK(parse_intervention(to_string(w)) == w);
  CHECK_THROWS_AS(parse_intervention("spin"), InvalidArgument);
  const auto grid = boost_grid();
  CHECK(grid.size() == 7);
  CHECK(grid.front() == 1.0 / 64);
  CHECK(grid.back() == 64.0);
}

TEST_CASE("study CSV round trip") {
  const std::vector<StudyRow> rows = {{"ref_r00", "boost_fg", 0.015625, "ood1_acc", 0.61, 0.55},
                                      {"ref_r01", "rotation", 0.0, "geom_3", 0.2, 0.1}};
  std::stringstream s;
  write_study_csv(s, rows);
  const auto back = read_study_csv(s);
  REQUIRE(back.size() == 2);
  CHECK(back[0].model_id == "ref_r00");
  CHECK(back[0].g == 0.015625);
  CHECK(back[1].delta() == doctest::Approx(-0.1));
}

TEST_CASE("a small study produces paired rows and t-tests") {
  std::vector<StudyModel> models;
  for (int i = 0; i < 3; ++i) {
    synth::EnvironmentSpec s;
    s.p_co = 0.9;
    s.sigma_eps = 1.2;
    s.n_samples = 300;
    s.seed = 100 + i;
    mlp::TrainConfig tc;
    tc.epochs = 40;
    tc.seed = i;
    models.push_back({"m" + std::to_string(i), s, mlp::train(synth::generate(s), tc)});
  }
  StudyConfig cfg;
  cfg.n_eval = 200;
  cfg.n_rotation = 400;
  cfg.metrics.n_anchor = 20;
  cfg.metrics.n_perturb = 10;
  cfg.metrics.rsa_cap = 30;
  cfg.seed = 7;
  const auto boost = run_intervention_study(models, Intervention::boost_fg, cfg);
  CHECK(boost.deltas("ood1_acc").size() == 3);
  CHECK(boost.ttests.size() == 3);
  const auto again = run_intervention_study(models, Intervention::boost_fg, cfg);
  CHECK(again.deltas("ood2_acc") == boost.deltas("ood2_acc"));

  const auto rot = run_intervention_study(models, Intervention::rotation, cfg);
  CHECK(rot.deltas("geom_3").size() == 3);
  for (const auto& r : rot.rows) CHECK(r.intervention == "rotation");
}
