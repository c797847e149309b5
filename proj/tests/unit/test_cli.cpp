#include "doctest.h"

#include "cli_app.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ctxlab::cli;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ctxlab");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ctxlab_cli_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run_cli({"--help"}).code == kExitOk);
  CHECK(run_cli({}).code == kExitUsage);
  CHECK(run_cli({"frobnicate"}).code == kExitUsage);
  CHECK(run_cli({"gen", "--bogus", "1"}).code == kExitUsage);
  const auto bad = run_cli({"gen", "--seed", "1", "--out", scratch_dir("bad").string(), "--p-co", "2"});
  CHECK(bad.code == kExitUsage);
  CHECK(bad.err.find("p_co") != std::string::npos);
}

TEST_CASE("a seed is required unless CTXLAB_SEED is set") {
  const auto dir = scratch_dir("seed");
  ::unsetenv("CTXLAB_SEED");
  CHECK(run_cli({"gen", "--out", dir.string(), "--n", "10"}).code == kExitUsage);
  ::setenv("CTXLAB_SEED", "5", 1);
  CHECK(run_cli({"gen", "--out", dir.string(), "--n", "10"}).code == kExitOk);
  const std::string env_run = slurp(dir / "train.csv");
  ::unsetenv("CTXLAB_SEED");
  CHECK(run_cli({"gen", "--out", dir.string(), "--n", "10", "--seed", "5"}).code == kExitOk);
  CHECK(slurp(dir / "train.csv") == env_run);
}

TEST_CASE("gen writes four splits with sidecars, deterministically") {
  const auto a = scratch_dir("gen_a"), b = scratch_dir("gen_b");
  for (const auto& d : {a, b})
    REQUIRE(run_cli({"gen", "--seed", "9", "--out", d.string(), "--n", "40", "--p-co", "0.8"}).code == kExitOk);
  for (const char* name : {"train.csv", "train.spec", "id.csv", "ood1.csv", "ood1.spec", "ood2.csv"}) {
    CHECK(fs::exists(a / name));
    CHECK(slurp(a / name) == slurp(b / name));
  }
  CHECK(slurp(a / "ood1.spec").find("p_co=0\n") != std::string::npos);
  CHECK(slurp(a / "train.spec").find("p_co=0.80000000000000004") != std::string::npos);
}

TEST_CASE("config files are read and flags override them") {
  const auto dir = scratch_dir("config");
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "gen.cfg");
    cfg << "# comment\nseed = 4\nn = 15\np_co = 0.6\n";
  }
  REQUIRE(run_cli({"gen", "--config", (dir / "gen.cfg").string(), "--out", (dir / "a").string()}).code == kExitOk);
  CHECK(slurp(dir / "a" / "train.spec").find("p_co=0.59999999999999998") != std::string::npos);
  CHECK(slurp(dir / "a" / "train.spec").find("n_samples=15") != std::string::npos);
  REQUIRE(run_cli({"gen", "--config", (dir / "gen.cfg").string(), "--out", (dir / "b").string(), "--p-co", "0.7"}).code ==
          kExitOk);
  CHECK(slurp(dir / "b" / "train.spec").find("p_co=0.69999999999999996") != std::string::npos);
  CHECK(run_cli({"gen", "--config", (dir / "missing.cfg").string(), "--out", (dir / "c").string()}).code == kExitUsage);
}

TEST_CASE("train, metrics and their failure modes") {
  const auto dir = scratch_dir("train");
  REQUIRE(run_cli({"gen", "--seed", "2", "--out", (dir / "data").string(), "--n", "120"}).code == kExitOk);
  const auto t = run_cli({"train", "--seed", "2", "--data", (dir / "data").string(), "--out", (dir / "m").string(),
                          "--epochs", "20"});
  REQUIRE(t.code == kExitOk);
  CHECK(slurp(dir / "m" / "eval.csv").rfind("split,accuracy\ntrain,", 0) == 0);
  const auto m = run_cli({"metrics", "--seed", "2", "--model", (dir / "m" / "model.json").string(), "--data",
                          (dir / "data").string(), "--out", (dir / "metrics.csv").string(), "--n-anchor", "20",
                          "--n-perturb", "10", "--fbps-samples", "200"});
  REQUIRE(m.code == kExitOk);
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv.rfind("model_id,p_co,sigma_eps,alpha1,alpha2,id_acc,ood1_acc,ood2_acc,probe_1", 0) == 0);
  CHECK(csv.find("\nmodel,") != std::string::npos);

  CHECK(run_cli({"train", "--seed", "2", "--data", (dir / "nowhere").string(), "--out", (dir / "x").string()}).code ==
        kExitUsage);
  {
    std::ofstream cfg(dir / "huge.cfg");
    cfg << "mu_n=1e300\nn=50\nseed=3\n";
  }
  REQUIRE(run_cli({"gen", "--config", (dir / "huge.cfg").string(), "--out", (dir / "huge").string()}).code == kExitOk);
  CHECK(run_cli({"train", "--seed", "2", "--data", (dir / "huge").string(), "--out", (dir / "y").string(), "--epochs",
                 "2"})
            .code == kExitDegenerate);
}

TEST_CASE("degenerate population data exits with code 3") {
  const auto dir = scratch_dir("degenerate");
  fs::create_directories(dir);
  {
    std::ofstream pop(dir / "pop.csv");
    pop << "model_id,p_co,sigma_eps,alpha1,alpha2,id_acc,ood1_acc,ood2_acc,probe_1,probe_2,probe_3,rsa_1,rsa_2,rsa_3,"
           "geom_1,geom_2,geom_3,fbps_l2_1,fbps_l2_2,fbps_l2_3,fbps_kl_out,flags\n";
    for (int i = 0; i < 12; ++i) pop << "erm_" << i << ",0.9,1,0,0,0.9,0.5,0.5,1,1,1,0,0,0,0,0,0,0,0,0,0,0\n";
  }
  const auto r = run_cli({"report", "--population", (dir / "pop.csv").string(), "--out", (dir / "plots").string()});
  CHECK(r.code == kExitDegenerate);
}
