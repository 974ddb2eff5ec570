#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "transport/cli.hpp"

using namespace transport::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("transport_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream is(p);
  std::string line;
  std::getline(is, line);
  return line;
}

ExperimentConfig small_sparse_dom(const fs::path& out) {
  return resolve_config({}, {{"experiment", "sparse-dom"}, {"L", "3"}, {"N", "7"}, {"out", out.string()}});
}

ExperimentConfig small_rbm(const fs::path& out, const std::string& seed = "0") {
  return resolve_config({}, {{"experiment", "rbm-example1"},
                             {"train", "9"},
                             {"truth_grid", "2"},
                             {"n_max", "3"},
                             {"seed", seed},
                             {"out", out.string()}});
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(TRANSPORT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config grammar") {
  std::istringstream is("# header\nexperiment = sparse-dom\n\n  L=4   # trailing comment\nN = 16\n");
  const auto kv = parse_config(is);
  CHECK(kv.size() == 3);
  CHECK(kv.at("L") == "4");
  CHECK(kv.at("experiment") == "sparse-dom");

  std::istringstream missing("L 4\n");
  CHECK_THROWS_AS(parse_config(missing), ConfigError);
  std::istringstream dup("L = 4\nL = 5\n");
  CHECK_THROWS_AS(parse_config(dup), ConfigError);
  std::istringstream empty_key(" = 5\n");
  CHECK_THROWS_AS(parse_config(empty_key), ConfigError);
}

TEST_CASE("precedence: command line over file over defaults") {
  const std::map<std::string, std::string> file{{"experiment", "sparse-dom"}, {"L", "3"}, {"N", "7"}};
  const ExperimentConfig a = resolve_config(file, {});
  CHECK(a.L == 3);
  CHECK(a.N == 7);
  CHECK(a.kappa == 1.0);  // sparse-dom default
  CHECK(a.sigma == 0.5);
  const ExperimentConfig b = resolve_config(file, {{"L", "2"}});
  CHECK(b.L == 2);
  CHECK(b.N == 7);
  CHECK(resolve_config({{"experiment", "rbm-example1"}}, {}).epsilon == 1e-3);
  CHECK(resolve_config({{"experiment", "rbm-example1"}}, {}).kappa == 0.0);
  CHECK(resolve_config({}, {{"experiment", "cartoon-rate"}}).cells_max == 4096);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(resolve_config({}, {}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "nope"}}, {}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "sparse-dom"}, {"colour", "red"}}, {}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "sparse-dom"}}, {{"L", "four"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "sparse-dom"}}, {{"L", "4x"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "rbm-example1"}}, {{"train", "-3"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "rbm-example1"}}, {{"delta_target", "1"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "adaptive-transport"}}, {{"theta", "0"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "adaptive-transport"}}, {{"diagnostics", "maybe"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "sparse-dom"}}, {{"kappa", "0"}}), ConfigError);
  CHECK_THROWS_AS(resolve_config({{"experiment", "sparse-dom"}}, {{"jobs", "0"}}), ConfigError);
}

TEST_CASE("every key round-trips through entries") {
  for (const auto& name : experiment_names()) {
    const ExperimentConfig c = ExperimentConfig::defaults(name);
    ExperimentConfig d = ExperimentConfig::defaults(name);
    for (const auto& [k, v] : c.entries()) d.set(k, v);
    CHECK(d.entries() == c.entries());
  }
}

TEST_CASE("fitted slope of an exact power law") {
  std::vector<std::pair<double, double>> xy;
  for (double n = 16; n <= 8192; n *= 2) xy.emplace_back(n, 3.0 * std::pow(n, -0.75));
  CHECK(fitted_slope(xy, 64, 4096) == doctest::Approx(-0.75).epsilon(1e-12));
  CHECK(std::isnan(fitted_slope(xy, 100, 120)));
  xy.emplace_back(100.0, 0.0);  // non-positive errors are skipped
  CHECK(fitted_slope(xy, 64, 4096) == doctest::Approx(-0.75).epsilon(1e-12));
}

TEST_CASE("sparse-dom run: artifacts, pinned headers, determinism") {
  const fs::path a = scratch_dir("sd_a"), b = scratch_dir("sd_b");
  const RunReport ra = run(small_sparse_dom(a));
  ExperimentConfig cb = small_sparse_dom(b);
  cb.jobs = 3;
  run(cb);
  CHECK(ra.violations.empty());
  CHECK(first_line(a / "sparse_dom.csv") == "kind,L,N,dofs,dofs_full,err_G_L2,err_G_H1,err_u_norm1");
  CHECK(first_line(a / "G.csv") == "x1,x2,G");
  CHECK(fs::exists(a / "manifest.json"));
  for (const char* f : {"sparse_dom.csv", "G.csv"}) CHECK(slurp(a / f) == slurp(b / f));
  CHECK(slurp(a / "sparse_dom.csv").find('\r') == std::string::npos);

  const CompareReport rep = compare_runs(a, b);
  CHECK_FALSE(rep.differs);
  for (const auto& c : rep.columns) CHECK(c.max_relative == 0.0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("compare flags perturbed values and rejects schema mismatch") {
  const fs::path a = scratch_dir("cmp_a"), b = scratch_dir("cmp_b"), c = scratch_dir("cmp_c");
  run(small_sparse_dom(a));
  run(small_sparse_dom(b));
  {
    // Overwrite the last error value.
    std::string s = slurp(b / "sparse_dom.csv");
    const auto pos = s.rfind(',');
    s = s.substr(0, pos + 1) + "0.5\n";
    std::ofstream(b / "sparse_dom.csv", std::ios::binary) << s;
  }
  const CompareReport rep = compare_runs(a, b);
  CHECK(rep.differs);
  bool flagged = false;
  for (const auto& col : rep.columns)
    if (col.column == "err_u_norm1") flagged = col.flagged;
  CHECK(flagged);

  ExperimentConfig other = small_rbm(c);
  run(other);
  CHECK_THROWS_AS(compare_runs(a, c), ConfigError);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("rbm seeds change the training set and compare lists the picks") {
  const fs::path a = scratch_dir("rbm_a"), b = scratch_dir("rbm_b"), c = scratch_dir("rbm_c");
  run(small_rbm(a));
  run(small_rbm(b));
  run(small_rbm(c, "7"));
  CHECK(first_line(a / "greedy.csv") ==
        "trial_dim,test_dim,residual_vectors,stabilization_vectors,angle,delta,max_surrogate,max_truth_error,"
        "max_exact_error,ratio");
  CHECK(first_line(a / "picks.csv") == "step,angle");
  CHECK(slurp(a / "greedy.csv") == slurp(b / "greedy.csv"));
  const CompareReport rep = compare_runs(a, c);
  CHECK(rep.differs);
  bool listed = false;
  for (const auto& n : rep.notes) listed |= n.rfind("picks A:", 0) == 0;
  CHECK(listed);
  for (const auto& p : {a, b, c}) fs::remove_all(p);
}

TEST_CASE("cartoon run reports the slope check") {
  const fs::path out = scratch_dir("cartoon");
  const RunReport r = run(resolve_config({}, {{"experiment", "cartoon-rate"}, {"cells_max", "256"}, {"cells_min", "32"},
                                              {"out", out.string()}}));
  CHECK(first_line(out / "cartoon.csv") == "N,error");
  CHECK(r.summary.find("fitted slope") != std::string::npos);
  CHECK(r.violations.empty());
  fs::remove_all(out);
}

TEST_CASE("perturbed threshold changes the refinement path") {
  const fs::path a = scratch_dir("theta_a"), b = scratch_dir("theta_b");
  for (const auto& [dir, theta] : {std::pair{a, "0.5"}, std::pair{b, "0.4"}})
    run(resolve_config({}, {{"experiment", "adaptive-transport"}, {"max_dofs", "150"}, {"theta", theta},
                            {"out", dir.string()}}));
  const CompareReport rep = compare_runs(a, b);
  CHECK(rep.differs);
  bool n_flagged = false;
  for (const auto& c : rep.columns)
    if (c.file == "table.csv" && c.column == "n") n_flagged = c.flagged;
  CHECK(n_flagged);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("adaptive run writes the table columns") {
  const fs::path out = scratch_dir("adaptive");
  const RunReport r =
      run(resolve_config({}, {{"experiment", "adaptive-transport"}, {"max_dofs", "120"}, {"out", out.string()}}));
  CHECK(first_line(out / "table.csv") == "n,delta,error");
  CHECK(first_line(out / "history.csv") ==
        "generation,n,error,delta,estimator,bound,theta,enrichment_defect,oscillation,uzawa_steps");
  CHECK(fs::exists(out / "partition.json"));
  CHECK(r.summary.find("delta") != std::string::npos);
  fs::remove_all(out);
}

TEST_CASE("exit codes of the executable") {
  const fs::path out = scratch_dir("exit");
  CHECK(run_cli("run sparse-dom --L 2 --N 3 --out " + out.string()) == 0);
  CHECK(run_cli("run sparse-dom --L 2 --N 3 --check --out " + out.string()) == 0);
  CHECK(run_cli("run sparse-dom --colour red") == 2);
  CHECK(run_cli("run no-such-experiment") == 2);
  CHECK(run_cli("run --config /no/such/file") == 2);
  const int st = std::system(("SOLVER_LOG_LEVEL=loud " + std::string(TRANSPORT_CLI) + " run sparse-dom >/dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(st) == 2);
  CHECK(run_cli("run rbm-example1 --train 5 --truth-grid 2 --n-max 3 --delta-target 0.01 --out " + out.string()) == 3);
  CHECK(run_cli("compare " + out.string() + " " + out.string()) == 0);
  fs::remove_all(out);
}
