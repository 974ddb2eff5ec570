#pragma once

// Reduced basis method for transport with the direction as parameter:
// outer greedy over residual surrogates, inner greedy enrichment of the test
// space with supremizers until the reduced inf-sup condition holds.

#include <array>
#include <functional>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "transport/solver.hpp"

namespace transport {

/// s . grad u + kappa u = f on the unit square, u = 0 on the inflow boundary,
/// with s = (cos phi, sin phi) and phi taken from a finite training set.
struct ParametricProblem {
  std::vector<double> angles;
  PiecewiseSmooth f;
  double kappa = 0.0;
  int truth_grid = 8;
  TestSpaceOptions truth_test{.order = 3, .extra_refinements = 1};
  /// Exact solution per angle, when known.
  std::function<PiecewiseSmooth(double)> exact;

  static Vec2 direction(double phi) { return {std::cos(phi), std::sin(phi)}; }
  /// n angles spaced uniformly on [0, pi/2], endpoints included.
  static std::vector<double> quarter_circle(std::size_t n);
  /// f = 1.
  static ParametricProblem example1(std::size_t n_train = 64, double kappa = 0.0);
  /// f = 0.5 for x1 < x2 and 1 otherwise.
  static ParametricProblem example2(std::size_t n_train = 64, double kappa = 0.0);
};

inline constexpr double kOutflowPenalty = 1e6;
inline constexpr std::size_t kAffineTerms = 3;

/// Fixed truth trial/test pair with the affine pieces of the transport form,
/// the Gram matrices and the outflow penalties. Truth solves and Gram
/// factorizations are cached per training index; the caches are thread-safe.
class TruthModel {
 public:
  explicit TruthModel(ParametricProblem pp);

  const ParametricProblem& problem() const { return pp_; }
  const TrialSpace& trial() const { return *X_; }
  const TestSpace& test() const { return *V_; }
  std::size_t size() const { return pp_.angles.size(); }
  double angle(std::size_t i) const { return pp_.angles[i]; }

  /// cos phi, sin phi, 1.
  static std::array<double, kAffineTerms> theta(double phi);
  /// Unit-square edges with s . n > 0: right, top, left, bottom.
  static std::array<bool, 4> outflow_edges(double phi);

  const std::array<SparseMatrix, kAffineTerms>& B_terms() const { return B_; }
  const SparseMatrix& G_term(std::size_t k, std::size_t l) const { return G_[k][l]; }
  const std::array<SparseMatrix, 4>& penalties() const { return P_; }
  const Eigen::VectorXd& rhs() const { return rhs_; }

  SparseMatrix B(double phi) const;
  SparseMatrix G(double phi) const;
  /// Same operators assembled from scratch for the given direction.
  SparseMatrix B_direct(double phi) const;
  SparseMatrix G_direct(double phi) const;

  const GramSolver& gram(std::size_t i) const;
  const SaddleState& truth_solve(std::size_t i) const;
  SaddleState truth_solve_at(double phi) const;

 private:
  ParametricProblem pp_;
  std::unique_ptr<TrialSpace> X_;
  std::unique_ptr<TestSpace> V_;
  std::array<SparseMatrix, kAffineTerms> B_;
  std::array<std::array<SparseMatrix, kAffineTerms>, kAffineTerms> G_;
  std::array<SparseMatrix, 4> P_;
  Eigen::VectorXd rhs_;

  mutable std::vector<std::unique_ptr<GramSolver>> grams_;
  mutable std::vector<std::unique_ptr<SaddleState>> truths_;
  mutable std::vector<std::unique_ptr<std::mutex>> locks_;
};

struct GreedyRecord {
  std::size_t trial_dim = 0;
  std::size_t test_dim = 0;
  std::size_t residual_vectors = 0;       // lifted truth residuals of the picks
  std::size_t stabilization_vectors = 0;  // supremizers added by the inf-sup loop
  double angle = 0.0;  // the pick of this step
  double delta = 0.0;  // sqrt(1 - beta^2) with beta the smallest reduced inf-sup constant
  double max_surrogate = 0.0;
  double max_truth_error = 0.0;  // against truth solves, NaN when not tracked
  double max_exact_error = 0.0;  // against the exact solution, NaN when unknown
  double seconds = 0.0;
};

/// Reduced spaces as truth coefficient vectors, with the affine pieces
/// projected onto them. Online solves touch only the projected pieces.
struct ReducedModel {
  Eigen::MatrixXd trial;  // L2-orthonormal columns
  Eigen::MatrixXd test;   // orthonormal columns (Euclidean)
  std::array<Eigen::MatrixXd, kAffineTerms> B;                                  // test x trial
  std::array<std::array<Eigen::MatrixXd, kAffineTerms>, kAffineTerms> G;        // test x test
  std::array<Eigen::MatrixXd, 4> P;
  Eigen::VectorXd rhs;
  double angle_min = 0.0, angle_max = 0.0;
  std::vector<double> picks;
  std::vector<GreedyRecord> history;

  std::size_t n() const { return static_cast<std::size_t>(trial.cols()); }
  std::size_t test_dim() const { return static_cast<std::size_t>(test.cols()); }
  Eigen::MatrixXd reduced_B(double phi) const;
  Eigen::MatrixXd reduced_G(double phi) const;
  /// Recomputes the projected pieces after the spaces changed.
  void project(const TruthModel& truth);

  nlohmann::json to_json() const;
  static ReducedModel from_json(const nlohmann::json& j);
  void write_history_csv(std::ostream& os) const;
};

ReducedModel empty_model(const TruthModel& truth);

/// Reduced Petrov-Galerkin coefficients in the trial basis.
Eigen::VectorXd online_solve(const ReducedModel& m, double phi);
/// Smallest singular value of G_n^-1/2 B_n and its right singular vector.
double reduced_inf_sup(const ReducedModel& m, double phi, Eigen::VectorXd* worst = nullptr);
/// Truth dual norm of f - B u_T(mu_i), the floor every reduced residual sits on.
double truth_residual(const TruthModel& truth, std::size_t i);
/// Truth dual norm of f - B u_n for training index i, measured above the
/// truth residual: sqrt(||f - B u_n||^2 - ||f - B u_T||^2) = ||B (u_T - u_n)||,
/// which holds because u_T minimizes the dual-norm residual. Evaluated in the
/// second form.
double surrogate(const TruthModel& truth, const ReducedModel& m, std::size_t i);

class StabilizationError : public std::runtime_error {
 public:
  StabilizationError(const std::string& what, double angle, double beta)
      : std::runtime_error(what), angle(angle), beta(beta) {}
  double angle;
  double beta;
};

/// Adds truth supremizers of the worst trial function at the worst angle
/// until every training angle has reduced inf-sup >= sqrt(1 - delta_target^2).
/// Returns the number of added test functions.
int update_inf_sup_delta(const TruthModel& truth, ReducedModel& m, double delta_target, int jobs = 1);

struct GreedyOptions {
  double epsilon = 1e-3;
  double delta_target = 0.5;
  std::size_t n_max = 30;
  bool track_errors = true;
  int jobs = 1;
};

/// Residual surrogates for all training angles with reduced solves; repeated
/// calls reuse per-angle inner products, so the cost per call after the first
/// is independent of the truth size for unchanged trial columns.
class SurrogateCache {
 public:
  explicit SurrogateCache(const TruthModel& truth) : truth_(truth) {}
  /// Brings the per-angle inner products up to the trial columns of m.
  void update(const ReducedModel& m, int jobs = 1);
  double value(std::size_t i, const Eigen::VectorXd& c) const;

 private:
  struct Entry {
    double ff = 0.0;          // f' G^-1 f
    double floor = 0.0;       // squared truth residual
    Eigen::VectorXd fw;       // (B w_j)' G^-1 f
    Eigen::MatrixXd ww;       // (B w_j)' G^-1 (B w_k)
  };
  const TruthModel& truth_;
  std::vector<Entry> entries_;
  std::size_t columns_ = 0;
  bool ready_ = false;
};

ReducedModel greedy_build(const TruthModel& truth, const GreedyOptions& opt = {});

}  // namespace transport
