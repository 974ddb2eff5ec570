#pragma once

// Experiment driver behind transport-cli: configuration, experiment runs with
// their artifacts, and comparison of two output directories.
//
// Config grammar, one entry per line:
//   key = value     # comment
// Blank lines and lines starting with '#' are skipped. Keys are listed in
// ExperimentConfig; unknown keys are rejected. Command-line overrides take
// precedence over the file, which takes precedence over the defaults of the
// chosen experiment.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace transport::cli {

inline constexpr int kSchemaVersion = 1;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure inside an experiment (exit code 3).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& experiment_names();

struct ExperimentConfig {
  std::string experiment;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;  // rbm: 0 keeps the equispaced training set, otherwise angles are drawn at random
  int jobs = 1;

  // cartoon-rate
  std::size_t cells_min = 64;
  std::size_t cells_max = 4096;
  int initial_grid = 4;

  // adaptive-transport, isotropic-baseline
  double epsilon = 1e-6;
  double theta = 0.5;
  int K = 10;
  std::size_t max_dofs = 2100;
  int max_generations = 60;
  bool diagnostics = false;
  std::size_t rate_min = 50;
  std::size_t rate_max = 2000;

  // rbm-example1, rbm-example2
  std::size_t train = 64;
  double delta_target = 0.5;
  std::size_t n_max = 30;
  double kappa = 0.0;
  int truth_grid = 8;

  // sparse-dom
  int L = 5;
  int N = 32;
  double sigma = 0.5;
  bool full = false;

  /// Defaults of the named experiment; throws ConfigError for unknown names.
  static ExperimentConfig defaults(const std::string& experiment);

  /// Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// All keys with their current values, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  void validate() const;
};

/// Parses the flat key-value grammar; the source name goes into messages.
std::map<std::string, std::string> parse_config(std::istream& is, const std::string& source = "config");

/// Builds the configuration: experiment from the overrides or the file, then
/// defaults, file entries and overrides in that order.
ExperimentConfig resolve_config(const std::map<std::string, std::string>& file,
                                const std::map<std::string, std::string>& overrides);

/// Least-squares slope of log(y) against log(x) over points with x in [lo, hi].
double fitted_slope(const std::vector<std::pair<double, double>>& xy, double lo, double hi);

struct RunReport {
  std::vector<std::string> files;       // written artifacts, relative to out
  std::string summary;                  // table printed to standard output
  std::vector<std::string> violations;  // failed checks
};

/// Runs the experiment and writes its artifacts into cfg.out. Throws
/// NumericalFailure on solver breakdown.
RunReport run(const ExperimentConfig& cfg);

struct ColumnDifference {
  std::string file;
  std::string column;
  double max_relative = 0.0;
  bool flagged = false;
};

struct CompareReport {
  std::vector<ColumnDifference> columns;
  std::vector<std::string> notes;  // row count mismatches, pick sequences
  bool differs = false;
};

/// Compares the CSVs of two run directories column by column. Throws
/// ConfigError when the experiments or CSV headers do not match.
CompareReport compare_runs(const std::filesystem::path& a, const std::filesystem::path& b,
                           double threshold = 1e-12);
void print_report(std::ostream& os, const CompareReport& r);

}  // namespace transport::cli
