#pragma once

// Adaptive anisotropic refinement driven by two-level fluctuation
// coefficients of B* applied to the lifted residual.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "transport/solver.hpp"

namespace transport {

struct AdaptiveConfig {
  double epsilon = 1e-3;
  double theta = 0.5;
  double rho = 0.7;
  double eta = 0.3;
  double alpha1 = 0.1;
  double alpha2 = 0.1;
  int K = 10;
  /// Stop the inner iteration once ||y^k - y^{k-1}||_Y < early_stop ||y^k||_Y (0 keeps K fixed).
  double early_stop = 0.0;
  int max_generations = 30;
  /// Stop before a generation would exceed this many trial dofs (0: no limit).
  std::size_t max_dofs = 0;
  /// Number of times theta may be halved per generation when the enrichment
  /// check fails; the last marking is kept either way.
  int max_theta_halvings = 0;
  int initial_grid = 4;
  /// Only isotropic refinements (comparison mode).
  bool isotropic = false;
  TestSpaceOptions test{.upstream_grading = true};
  /// Reference solution for errors and proximality estimates; the method of
  /// characteristics is used when absent.
  std::optional<PiecewiseSmooth> reference;
  /// Also compute the direct solution per generation, the Uzawa contraction
  /// factors and the residual bounds in the enriched test space.
  bool diagnostics = false;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct GenerationRecord {
  int generation = 0;
  std::size_t n = 0;
  double error = 0.0;
  std::optional<double> delta;
  double estimator = 0.0;
  double seconds = 0.0;
  double bound = 0.0;  // error bound e of the loop
  double theta = 0.0;  // threshold fraction used for marking
  double enrichment_defect = 0.0;
  double oscillation = 0.0;
  int uzawa_steps = 0;
  // Filled with diagnostics enabled.
  std::vector<double> contraction;
  double residual_lower = 0.0;  // (1 - delta) ||f_h - B w||_(V+)'
  double residual_lifted = 0.0;  // ||y_h||_Y
  double residual_upper = 0.0;  // ||f_h - B w||_(V+)'
};

struct ConvergenceHistory {
  std::vector<GenerationRecord> rows;

  /// Columns: generation, n, error, delta, estimator, seconds.
  void write_csv(std::ostream& os) const;
};

struct AdaptiveResult {
  Partition partition;
  SaddleState state;
  ConvergenceHistory history;
  std::vector<Partition> partitions;  // one per generation
  bool reached_target = false;
  std::string diagnostic;
};

/// Largest fluctuation coefficient of a cell and the rule realizing it.
struct CellIndicator {
  double value = 0.0;
  std::optional<SplitRule> rule;  // empty for the isotropic refinement
};

/// |<g, psi>| maximized over the fluctuation functions of every admissible
/// refinement of every cell, with g = B* y given on the test triangles.
std::vector<CellIndicator> fluctuation_indicators(const Partition& p, const AdjointField& g, bool isotropic);

struct MarkResult {
  Partition partition;
  std::size_t marked = 0;
  bool converged = false;  // all coefficients vanish
};

/// Splits every cell whose indicator exceeds theta times the largest one with
/// its maximizing rule (isotropically in isotropic mode), then merges.
MarkResult mark_and_refine(const Partition& p, const std::vector<CellIndicator>& ind, double theta, bool isotropic);
MarkResult mark_and_refine(const Partition& p, const TestSpace& test, const Eigen::VectorXd& y,
                           const TransportProblem& prob, double theta, bool isotropic = false);

/// inf over g in X(refined) of ||B* y - g|| / ||B* y||.
double enrichment_defect(const Partition& refined, const AdjointField& g, double norm);

/// L2 projection of a trial function onto another partition of the domain.
Eigen::VectorXd transfer(const TrialSpace& from, const Eigen::VectorXd& u, const TrialSpace& to);

/// Dual norm, on the once-refined test space, of f - f_h where f_h is the
/// load of the L2 projection of f onto the once isotropically refined trial
/// partition.
double data_oscillation(const TransportProblem& prob, const TrialSpace& trial, const TestSpaceOptions& opt = {});

AdaptiveResult adaptive_solve(const TransportProblem& prob, const AdaptiveConfig& cfg);

}  // namespace transport
