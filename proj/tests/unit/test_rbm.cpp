#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "transport/rbm.hpp"

using namespace transport;

namespace {

double max_abs(const SparseMatrix& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

// Small truth for greedy properties: coarse grid.
ParametricProblem small_problem(std::size_t n_train = 9) {
  auto pp = ParametricProblem::example1(n_train);
  pp.truth_grid = 4;
  pp.truth_test = {.order = 3, .extra_refinements = 1};
  return pp;
}

struct SmallGreedy {
  TruthModel truth{small_problem(33)};
  ReducedModel model;
  SmallGreedy() {
    GreedyOptions opt;
    opt.epsilon = 1e-6;
    opt.n_max = 8;
    model = greedy_build(truth, opt);
  }
};

const SmallGreedy& small_greedy() {
  static const SmallGreedy g;
  return g;
}

std::size_t index_of(const TruthModel& truth, double phi) {
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth.angle(i) == phi) return i;
  FAIL("angle not in the training set");
  return 0;
}

}  // namespace

TEST_CASE("quarter circle includes both endpoints") {
  const auto a = ParametricProblem::quarter_circle(64);
  REQUIRE(a.size() == 64);
  CHECK(a.front() == 0.0);
  CHECK(a.back() == doctest::Approx(std::numbers::pi / 2).epsilon(1e-15));
  for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] > a[i - 1]);
}

TEST_CASE("outflow edges follow the direction") {
  const auto e = TruthModel::outflow_edges(0.3);
  CHECK(e == std::array<bool, 4>{true, true, false, false});
  CHECK(TruthModel::outflow_edges(0.0) == std::array<bool, 4>{true, false, false, false});
  CHECK(TruthModel::outflow_edges(std::numbers::pi / 2) == std::array<bool, 4>{false, true, false, false});
}

TEST_CASE("affine sums reproduce direct assembly") {
  auto pp = small_problem();
  pp.kappa = 0.7;
  TruthModel truth(pp);
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi / 2);
  for (int k = 0; k < 5; ++k) {
    const double phi = angle(rng);
    const SparseMatrix dB = truth.B(phi) - truth.B_direct(phi);
    const SparseMatrix dG = truth.G(phi) - truth.G_direct(phi);
    CHECK(max_abs(dB) <= 1e-12 * max_abs(truth.B_direct(phi)));
    CHECK(max_abs(dG) <= 1e-12 * max_abs(truth.G_direct(phi)));
  }
}

TEST_CASE("zero load gives the zero truth solution") {
  auto pp = small_problem(3);
  pp.f.value = [](const Vec2&, bool) { return 0.0; };
  TruthModel truth(pp);
  for (std::size_t i = 0; i < truth.size(); ++i) CHECK(truth.truth_solve(i).u.norm() == 0.0);
}

TEST_CASE("travel time at the centre along the diagonal") {
  auto pp = ParametricProblem::example1(1);
  REQUIRE(pp.angles[0] == doctest::Approx(std::numbers::pi / 4));
  TruthModel truth(pp);
  const auto& u = truth.truth_solve(0).u;
  // The kink runs along the diagonal; read the two cells at the centre it does not cross.
  for (Vec2 x : {Vec2{0.501, 0.499}, Vec2{0.499, 0.501}})
    CHECK(std::abs(*truth.trial().eval(u, x) - 0.5 * std::sqrt(2.0)) <= 2e-2);
}

TEST_CASE("closed-form example solutions match characteristics") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double kappa : {0.0, 0.7}) {
    for (int which : {1, 2}) {
      const auto pp = which == 1 ? ParametricProblem::example1(4, kappa) : ParametricProblem::example2(4, kappa);
      for (double phi : {0.2, 0.9, 1.3}) {
        TransportProblem tp = TransportProblem::constant(ParametricProblem::direction(phi), kappa, 0.0);
        tp.f = pp.f;
        const PiecewiseSmooth u = pp.exact(phi);
        for (int k = 0; k < 20; ++k) {
          const Vec2 x{unit(rng), unit(rng)};
          CHECK(u(x) == doctest::Approx(characteristics_value(tp, x)).epsilon(1e-7));
        }
      }
    }
  }
}

TEST_CASE("truth error against the exact solution") {
  // The kink of the travel time runs through the cells, so the broken P1
  // truth error is bounded by the grid, and it shrinks with it.
  const double phi = 0.4;
  double coarse = 0.0, fine = 0.0;
  for (int grid : {4, 8}) {
    auto pp = ParametricProblem::example1(1);
    pp.angles = {phi};
    pp.truth_grid = grid;
    TruthModel truth(pp);
    const double err = truth.trial().l2_error(truth.truth_solve(0).u, pp.exact(phi));
    (grid == 4 ? coarse : fine) = err;
  }
  CHECK(fine < 1e-2);
  CHECK(fine < 0.6 * coarse);
}

TEST_CASE("empty model: zero solution, surrogate from the load") {
  const TruthModel truth(small_problem(3));
  const ReducedModel m = empty_model(truth);
  CHECK(online_solve(m, truth.angle(1)).size() == 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double f = truth.gram(i).dual_norm(truth.rhs());
    const double s = surrogate(truth, m, i), r = truth_residual(truth, i);
    CHECK(s * s + r * r == doctest::Approx(f * f).epsilon(1e-10));
    CHECK(r < 0.05 * f);
  }
}

TEST_CASE("single training angle converges after one snapshot") {
  auto pp = small_problem();
  pp.angles = {0.6};
  const TruthModel truth(pp);
  const ReducedModel m = greedy_build(truth, {.epsilon = 1e-6});
  REQUIRE(m.n() == 1);
  CHECK(surrogate(truth, m, 0) <= 1e-10);
  CHECK(m.history.back().max_surrogate <= 1e-10);
}

TEST_CASE("greedy picks are reproduced by the reduced solve") {
  const auto& g = small_greedy();
  REQUIRE(g.model.n() >= 3);
  for (double phi : g.model.picks) {
    const std::size_t i = index_of(g.truth, phi);
    const Eigen::VectorXd un = g.model.trial * online_solve(g.model, phi);
    CHECK((un - g.truth.truth_solve(i).u).norm() <= 1e-8);
  }
}

TEST_CASE("reduced spaces are orthonormal and the test space is larger") {
  const auto& m = small_greedy().model;
  const auto n = Eigen::Index(m.n()), k = Eigen::Index(m.test_dim());
  CHECK((m.trial.transpose() * m.trial - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-10);
  CHECK((m.test.transpose() * m.test - Eigen::MatrixXd::Identity(k, k)).norm() < 1e-10);
  CHECK(m.test_dim() >= m.n());
  for (const auto& r : m.history) CHECK(r.test_dim == r.residual_vectors + r.stabilization_vectors);
}

TEST_CASE("reduced inf-sup holds on the whole training set after stabilization") {
  const auto& g = small_greedy();
  const double target = std::sqrt(1.0 - 0.25);
  for (std::size_t i = 0; i < g.truth.size(); ++i) CHECK(reduced_inf_sup(g.model, g.truth.angle(i)) >= target - 1e-8);
  for (const auto& r : g.model.history) CHECK(r.delta <= 0.5 + 1e-8);
}

TEST_CASE("maximal surrogate decreases along the greedy") {
  const auto& h = small_greedy().model.history;
  REQUIRE(h.size() >= 3);
  for (std::size_t k = 1; k < h.size(); ++k) CHECK(h[k].max_surrogate <= 1.02 * h[k - 1].max_surrogate);
}

TEST_CASE("surrogate is sandwiched by the truth error") {
  const auto& g = small_greedy();
  for (const auto& r : g.model.history) {
    CHECK(r.max_surrogate <= r.max_truth_error * (1.0 + 1e-6));
    CHECK(r.max_surrogate >= (1.0 - 0.5 - 0.1) * r.max_truth_error);
  }
}

TEST_CASE("surrogate cache agrees with direct evaluation") {
  const auto& g = small_greedy();
  SurrogateCache cache(g.truth);
  cache.update(g.model);
  for (std::size_t i = 0; i < g.truth.size(); ++i) {
    const Eigen::VectorXd c = online_solve(g.model, g.truth.angle(i));
    const double direct = surrogate(g.truth, g.model, i);
    // Below ~1e-8 the cached form loses digits to cancellation.
    CHECK(std::abs(cache.value(i, c) - direct) <= 1e-5 * direct + 3e-8);
  }
}

TEST_CASE("held-out angles obey the error bound") {
  const auto& g = small_greedy();
  const double max_surr = g.model.history.back().max_surrogate;
  for (double phi : {0.05, 0.41, 1.0, 1.5}) {
    const SaddleState truth = g.truth.truth_solve_at(phi);
    const Eigen::VectorXd un = g.model.trial * online_solve(g.model, phi);
    CHECK((un - truth.u).norm() <= max_surr / (1.0 - 0.5) * 1.1);
  }
}

TEST_CASE("stabilization stops at once when supremizers are present") {
  const TruthModel truth(small_problem(3));
  ReducedModel m = empty_model(truth);
  m.trial = truth.truth_solve(1).u.normalized();
  Eigen::MatrixXd sup(truth.test().dim(), truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) sup.col(i) = truth.gram(i).solve(truth.B(truth.angle(i)) * m.trial);
  m.test = Eigen::HouseholderQR<Eigen::MatrixXd>(sup).householderQ() * Eigen::MatrixXd::Identity(sup.rows(), sup.cols());
  m.project(truth);
  CHECK(update_inf_sup_delta(truth, m, 0.5) == 0);
  CHECK(m.test_dim() == truth.size());
}

TEST_CASE("parallel and serial greedy agree") {
  const TruthModel truth(small_problem(33));
  GreedyOptions opt{.epsilon = 1e-6, .n_max = 4, .track_errors = false, .jobs = 3};
  const ReducedModel par = greedy_build(truth, opt);
  const auto& ser = small_greedy().model;
  REQUIRE(par.n() == 4);
  for (std::size_t k = 0; k < 4; ++k) CHECK(par.picks[k] == ser.picks[k]);
  CHECK(std::isnan(par.history.back().max_truth_error));
}

TEST_CASE("model JSON round trip is exact") {
  const auto& m = small_greedy().model;
  const ReducedModel back = ReducedModel::from_json(nlohmann::json::parse(m.to_json().dump()));
  CHECK(back.trial == m.trial);
  CHECK(back.test == m.test);
  CHECK(back.picks == m.picks);
  CHECK(back.history.size() == m.history.size());
  for (double phi : {0.1, 0.7, 1.2}) CHECK(online_solve(back, phi) == online_solve(m, phi));

  std::ostringstream a, b;
  m.write_history_csv(a);
  back.write_history_csv(b);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("trial_dim,test_dim,residual_vectors,stabilization_vectors,angle,delta,max_surrogate", 0) == 0);
}

TEST_CASE("greedy options are validated") {
  const TruthModel truth(small_problem(3));
  CHECK_THROWS_AS(greedy_build(truth, {.epsilon = 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(greedy_build(truth, {.delta_target = 1.0}), std::invalid_argument);
  ReducedModel m = empty_model(truth);
  CHECK_THROWS_AS(update_inf_sup_delta(truth, m, 0.5), std::invalid_argument);
}
