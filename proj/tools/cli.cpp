#include "transport/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "transport/adaptive.hpp"
#include "transport/radiative.hpp"
#include "transport/rbm.hpp"
#include "transport/spaces.hpp"

namespace transport::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T x{};
  is >> x;
  if (!is || !is.eof()) throw ConfigError(fmt::format("{}: cannot parse '{}'", key, v));
  if constexpr (std::is_unsigned_v<T>)
    if (trim(v).starts_with('-')) throw ConfigError(fmt::format("{}: must be non-negative, got '{}'", key, v));
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::string num(double x) { return fmt::format("{}", x); }

// Comma-separated rows with LF endings; doubles in shortest round-trip form.
class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header) : os_(path, std::ios::binary) {
    if (!os_) throw std::runtime_error("cannot write " + path.string());
    os_ << fmt::format("{}\n", fmt::join(header, ","));
  }
  void row(const std::vector<std::string>& cells) { os_ << fmt::format("{}\n", fmt::join(cells, ",")); }

 private:
  std::ofstream os_;
};

class Artifacts {
 public:
  explicit Artifacts(const ExperimentConfig& cfg) : cfg_(cfg) { fs::create_directories(cfg.out); }
  Csv csv(const std::string& name, const std::vector<std::string>& header) {
    files_.push_back({{"name", name}, {"columns", header}});
    report.files.push_back(name);
    return Csv(cfg_.out / name, header);
  }
  void json(const std::string& name, const nlohmann::json& j) {
    std::ofstream(cfg_.out / name, std::ios::binary) << j.dump(1) << '\n';
    files_.push_back({{"name", name}});
    report.files.push_back(name);
  }
  void finish(double seconds) {
    nlohmann::json config;
    for (const auto& [k, v] : cfg_.entries()) config[k] = v;
    nlohmann::json m{{"schema", kSchemaVersion},
                     {"experiment", cfg_.experiment},
                     {"config", config},
                     {"files", files_},
                     {"seconds", seconds}};
    std::ofstream(cfg_.out / "manifest.json", std::ios::binary) << m.dump(1) << '\n';
    report.files.push_back("manifest.json");
  }

  RunReport report;

 private:
  const ExperimentConfig& cfg_;
  std::vector<nlohmann::json> files_;
};

void check(RunReport& r, bool ok, const std::string& what) {
  if (!ok) r.violations.push_back(what);
}

// ----------------------------------------------------------------------------

void run_cartoon(const ExperimentConfig& cfg, Artifacts& art) {
  const CartoonFunction f{GraphCurve{[](double y) { return 0.5 * y * y; }}, [](const Vec2&) { return 1.0; },
                          [](const Vec2&) { return 0.5; }};
  const CartoonResult res = cartoon_approx(f, cfg.cells_max, cfg.initial_grid);
  std::vector<std::pair<double, double>> xy;
  {
    Csv csv = art.csv("cartoon.csv", {"N", "error"});
    for (const auto& [n, e] : res.history) {
      csv.row({std::to_string(n), num(e)});
      xy.emplace_back(double(n), e);
    }
  }
  art.json("partition.json", partition_to_json(res.partition));
  const double slope = fitted_slope(xy, double(cfg.cells_min), double(cfg.cells_max));
  std::string s = fmt::format("{:>8} {:>12}\n", "N", "error");
  for (const auto& [n, e] : res.history)
    if ((n & (n - 1)) == 0) s += fmt::format("{:>8} {:>12.4e}\n", n, e);
  s += fmt::format("fitted slope on [{}, {}]: {:.3f}\n", cfg.cells_min, cfg.cells_max, slope);
  art.report.summary = s;
  check(art.report, slope <= -0.8, fmt::format("cartoon slope {:.3f} > -0.8", slope));
}

void run_adaptive(const ExperimentConfig& cfg, Artifacts& art, bool isotropic) {
  AdaptiveConfig ac;
  ac.epsilon = cfg.epsilon;
  ac.theta = cfg.theta;
  ac.K = cfg.K;
  ac.max_dofs = cfg.max_dofs;
  ac.max_generations = cfg.max_generations;
  ac.isotropic = isotropic;
  ac.diagnostics = cfg.diagnostics;
  ac.reference = benchmark_solution();
  ac.validate();
  const AdaptiveResult res = adaptive_solve(TransportProblem::benchmark(), ac);
  const auto& rows = res.history.rows;

  auto opt = [](const std::optional<double>& d) { return d ? num(*d) : std::string("nan"); };
  {
    std::vector<std::string> header{"generation", "n",     "error",        "delta",
                                    "estimator",  "bound", "theta",        "enrichment_defect",
                                    "oscillation", "uzawa_steps"};
    if (cfg.diagnostics)
      for (const char* c : {"contraction_max", "residual_lower", "residual_lifted", "residual_upper"}) header.push_back(c);
    Csv csv = art.csv("history.csv", header);
    for (const auto& r : rows) {
      std::vector<std::string> cells{std::to_string(r.generation), std::to_string(r.n), num(r.error),
                                     opt(r.delta), num(r.estimator), num(r.bound), num(r.theta),
                                     num(r.enrichment_defect), num(r.oscillation), std::to_string(r.uzawa_steps)};
      if (cfg.diagnostics) {
        const double cmax = r.contraction.empty() ? 0.0 : *std::max_element(r.contraction.begin(), r.contraction.end());
        for (double v : {cmax, r.residual_lower, r.residual_lifted, r.residual_upper}) cells.push_back(num(v));
      }
      csv.row(cells);
    }
  }
  {
    Csv csv = art.csv("table.csv", {"n", "delta", "error"});
    for (const auto& r : rows) csv.row({std::to_string(r.n), opt(r.delta), num(r.error)});
  }
  art.json("partition.json", partition_to_json(res.partition));

  std::vector<std::pair<double, double>> xy;
  for (const auto& r : rows) xy.emplace_back(double(r.n), r.error);
  const double slope = fitted_slope(xy, double(cfg.rate_min), double(cfg.rate_max));

  std::string s = fmt::format("{:>6} {:>10} {:>12}\n", "n", "delta", "error");
  for (const auto& r : rows) s += fmt::format("{:>6} {:>10} {:>12.6f}\n", r.n, r.delta ? fmt::format("{:.6f}", *r.delta) : "-", r.error);
  s += fmt::format("fitted slope on [{}, {}]: {:.3f}\n", cfg.rate_min, cfg.rate_max, slope);
  art.report.summary = s;

  if (isotropic) {
    check(art.report, slope >= -0.65 && slope <= -0.4, fmt::format("isotropic slope {:.3f} outside [-0.65, -0.4]", slope));
    return;
  }
  check(art.report, slope <= -0.8, fmt::format("adaptive slope {:.3f} > -0.8", slope));
  for (const auto& r : rows) {
    if (r.delta) check(art.report, *r.delta < 0.5, fmt::format("generation {}: delta {:.4f} >= 0.5", r.generation, *r.delta));
    if (!cfg.diagnostics) continue;
    const double d = r.delta.value_or(0.0);
    for (double c : r.contraction)
      if (c > d + 0.05) {
        art.report.violations.push_back(
            fmt::format("generation {}: contraction {:.4f} > delta + 0.05 = {:.4f}", r.generation, c, d + 0.05));
        break;
      }
    check(art.report, r.residual_lower <= r.residual_lifted && r.residual_lifted <= (1 + 1e-8) * r.residual_upper,
          fmt::format("generation {}: residual sandwich violated", r.generation));
  }
}

void run_rbm(const ExperimentConfig& cfg, Artifacts& art, int example) {
  ParametricProblem pp =
      example == 1 ? ParametricProblem::example1(cfg.train, cfg.kappa) : ParametricProblem::example2(cfg.train, cfg.kappa);
  pp.truth_grid = cfg.truth_grid;
  if (cfg.seed != 0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> u(0.0, std::numbers::pi / 2);
    for (auto& a : pp.angles) a = u(rng);
    std::sort(pp.angles.begin(), pp.angles.end());
  }
  const TruthModel truth(pp);
  GreedyOptions go{.epsilon = cfg.epsilon, .delta_target = cfg.delta_target, .n_max = cfg.n_max, .track_errors = true,
                   .jobs = cfg.jobs};
  const ReducedModel m = greedy_build(truth, go);
  {
    Csv csv = art.csv("greedy.csv", {"trial_dim", "test_dim", "residual_vectors", "stabilization_vectors", "angle",
                                     "delta", "max_surrogate", "max_truth_error", "max_exact_error", "ratio"});
    for (const auto& r : m.history)
      csv.row({std::to_string(r.trial_dim), std::to_string(r.test_dim), std::to_string(r.residual_vectors),
               std::to_string(r.stabilization_vectors), num(r.angle), num(r.delta), num(r.max_surrogate),
               num(r.max_truth_error), num(r.max_exact_error), num(r.max_surrogate / r.max_truth_error)});
  }
  {
    Csv csv = art.csv("picks.csv", {"step", "angle"});
    for (std::size_t k = 0; k < m.picks.size(); ++k) csv.row({std::to_string(k + 1), num(m.picks[k])});
  }
  art.json("model.json", m.to_json());

  std::string s = fmt::format("{:>4} {:>6} {:>10} {:>12} {:>12} {:>8}\n", "n", "test", "delta", "surrogate", "error", "ratio");
  for (const auto& r : m.history)
    s += fmt::format("{:>4} {:>6} {:>10.4f} {:>12.4e} {:>12.4e} {:>8.3f}\n", r.trial_dim, r.test_dim, r.delta,
                     r.max_surrogate, r.max_truth_error, r.max_surrogate / r.max_truth_error);
  art.report.summary = s;

  auto reaches = [&](std::size_t dim, double target) {
    return std::any_of(m.history.begin(), m.history.end(),
                       [&](const GreedyRecord& r) { return r.trial_dim <= dim && r.max_surrogate <= target; });
  };
  if (example == 1) {
    check(art.report, reaches(12, 5e-3), "max surrogate above 5e-3 at every trial dimension <= 12");
    check(art.report, reaches(30, 1.5e-3), "max surrogate above 1.5e-3 at every trial dimension <= 30");
  }
  for (const auto& r : m.history) {
    const double ratio = r.max_surrogate / r.max_truth_error;
    check(art.report, ratio >= 0.25 && ratio <= 1.0 + 1e-8,
          fmt::format("n = {}: surrogate/error ratio {:.3f} outside [0.25, 1]", r.trial_dim, ratio));
    check(art.report, r.delta <= cfg.delta_target + 1e-8,
          fmt::format("n = {}: delta {:.4f} above the target", r.trial_dim, r.delta));
  }
}

void run_sparse_dom(const ExperimentConfig& cfg, Artifacts& art) {
  const RTEProblem prob = RTEProblem::manufactured(cfg.kappa, cfg.sigma);
  prob.validate();
  const TensorSolution ts = combine(cfg.L, cfg.N, prob, cfg.jobs);
  const RadiationErrors es = radiation_errors(ts.combined, cfg.L, ts.level_s, prob);
  const Eigen::VectorXd G = incident_radiation(ts.combined, ts.level_s);
  const double centre = SquareMesh(cfg.L).eval(G, {0.5, 0.5});

  std::string s = fmt::format("{:>6} {:>3} {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}\n", "kind", "L", "N", "dofs",
                              "dofs_full", "err_G_L2", "err_G_H1", "err_u");
  {
    Csv csv = art.csv("sparse_dom.csv", {"kind", "L", "N", "dofs", "dofs_full", "err_G_L2", "err_G_H1", "err_u_norm1"});
    auto add = [&](const char* kind, std::size_t dofs, const RadiationErrors& e) {
      csv.row({kind, std::to_string(cfg.L), std::to_string(cfg.N), std::to_string(dofs), std::to_string(ts.dofs_full),
               num(e.G_L2), num(e.G_H1), num(e.u_norm1)});
      s += fmt::format("{:>6} {:>3} {:>4} {:>10} {:>10} {:>10.3e} {:>10.3e} {:>10.3e}\n", kind, cfg.L, cfg.N, dofs,
                       ts.dofs_full, e.G_L2, e.G_H1, e.u_norm1);
    };
    add("sparse", ts.dofs_sparse, es);
    if (cfg.full) {
      const FullTensorSolution ft = solve_full_tensor(cfg.L, ts.level_s, prob);
      add("full", ts.dofs_full, radiation_errors(ft.u, cfg.L, ts.level_s, prob));
    }
  }
  {
    std::ostringstream os;
    write_G_grid(os, G, cfg.L);
    std::istringstream is(os.str());
    std::string header;
    std::getline(is, header);
    Csv csv = art.csv("G.csv", {"x1", "x2", "G"});
    for (std::string line; std::getline(is, line);) csv.row({line});
  }
  s += fmt::format("G(0.5, 0.5) = {:.6f}\n", centre);
  art.report.summary = s;
  check(art.report, ts.dofs_sparse <= ts.dofs_full, "sparse dofs exceed full-tensor dofs");
  check(art.report, std::isfinite(es.u_norm1) && std::isfinite(es.G_L2), "non-finite error");
  if (cfg.L >= 5 && cfg.N >= 32)
    check(art.report, std::abs(centre - 0.5625) <= 1e-2, fmt::format("G(0.5, 0.5) = {:.6f} off 0.5625 by more than 1e-2", centre));
}

// ----------------------------------------------------------------------------

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_csv(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot read " + p.string());
  Table t;
  auto split = [](const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
  };
  std::string line;
  if (std::getline(is, line)) t.header = split(line);
  while (std::getline(is, line)) t.rows.push_back(split(line));
  return t;
}

std::set<std::string> csv_names(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") names.insert(e.path().filename().string());
  return names;
}

std::string manifest_experiment(const fs::path& dir) {
  std::ifstream is(dir / "manifest.json");
  if (!is) return {};
  return nlohmann::json::parse(is).value("experiment", std::string());
}

double relative_difference(const std::string& a, const std::string& b) {
  if (a == b) return 0.0;
  char* ea = nullptr;
  char* eb = nullptr;
  const double x = std::strtod(a.c_str(), &ea), y = std::strtod(b.c_str(), &eb);
  if (ea == a.c_str() || eb == b.c_str() || *ea || *eb) return 1.0;
  if (std::isnan(x) || std::isnan(y)) return std::isnan(x) && std::isnan(y) ? 0.0 : 1.0;
  const double scale = std::max(std::abs(x), std::abs(y));
  return scale == 0.0 ? 0.0 : std::abs(x - y) / scale;
}

}  // namespace

// ----------------------------------------------------------------------------

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"cartoon-rate", "adaptive-transport", "isotropic-baseline",
                                              "rbm-example1", "rbm-example2",       "sparse-dom"};
  return names;
}

ExperimentConfig ExperimentConfig::defaults(const std::string& experiment) {
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), experiment) == names.end())
    throw ConfigError(fmt::format("unknown experiment '{}' (expected one of {})", experiment, fmt::join(names, ", ")));
  ExperimentConfig c;
  c.experiment = experiment;
  if (experiment.starts_with("rbm")) c.epsilon = 1e-3;
  if (experiment == "sparse-dom") c.kappa = 1.0;
  return c;
}

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "experiment") {
    if (v != experiment) throw ConfigError(fmt::format("experiment: '{}' conflicts with '{}'", v, experiment));
  } else if (key == "out") {
    out = v;
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, v);
  } else if (key == "jobs") {
    jobs = parse_number<int>(key, v);
  } else if (key == "cells_min") {
    cells_min = parse_number<std::size_t>(key, v);
  } else if (key == "cells_max") {
    cells_max = parse_number<std::size_t>(key, v);
  } else if (key == "initial_grid") {
    initial_grid = parse_number<int>(key, v);
  } else if (key == "epsilon") {
    epsilon = parse_number<double>(key, v);
  } else if (key == "theta") {
    theta = parse_number<double>(key, v);
  } else if (key == "K") {
    K = parse_number<int>(key, v);
  } else if (key == "max_dofs") {
    max_dofs = parse_number<std::size_t>(key, v);
  } else if (key == "max_generations") {
    max_generations = parse_number<int>(key, v);
  } else if (key == "diagnostics") {
    diagnostics = parse_bool(key, v);
  } else if (key == "rate_min") {
    rate_min = parse_number<std::size_t>(key, v);
  } else if (key == "rate_max") {
    rate_max = parse_number<std::size_t>(key, v);
  } else if (key == "train") {
    train = parse_number<std::size_t>(key, v);
  } else if (key == "delta_target") {
    delta_target = parse_number<double>(key, v);
  } else if (key == "n_max") {
    n_max = parse_number<std::size_t>(key, v);
  } else if (key == "kappa") {
    kappa = parse_number<double>(key, v);
  } else if (key == "truth_grid") {
    truth_grid = parse_number<int>(key, v);
  } else if (key == "L") {
    L = parse_number<int>(key, v);
  } else if (key == "N") {
    N = parse_number<int>(key, v);
  } else if (key == "sigma") {
    sigma = parse_number<double>(key, v);
  } else if (key == "full") {
    full = parse_bool(key, v);
  } else {
    throw ConfigError(fmt::format("unknown key '{}'", key));
  }
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::entries() const {
  return {{"experiment", experiment},
          {"out", out.string()},
          {"seed", std::to_string(seed)},
          {"jobs", std::to_string(jobs)},
          {"cells_min", std::to_string(cells_min)},
          {"cells_max", std::to_string(cells_max)},
          {"initial_grid", std::to_string(initial_grid)},
          {"epsilon", num(epsilon)},
          {"theta", num(theta)},
          {"K", std::to_string(K)},
          {"max_dofs", std::to_string(max_dofs)},
          {"max_generations", std::to_string(max_generations)},
          {"diagnostics", diagnostics ? "true" : "false"},
          {"rate_min", std::to_string(rate_min)},
          {"rate_max", std::to_string(rate_max)},
          {"train", std::to_string(train)},
          {"delta_target", num(delta_target)},
          {"n_max", std::to_string(n_max)},
          {"kappa", num(kappa)},
          {"truth_grid", std::to_string(truth_grid)},
          {"L", std::to_string(L)},
          {"N", std::to_string(N)},
          {"sigma", num(sigma)},
          {"full", full ? "true" : "false"}};
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(jobs >= 1, "jobs must be at least 1");
  require(cells_min >= 1 && cells_min < cells_max, "need 1 <= cells_min < cells_max");
  require(initial_grid >= 1, "initial_grid must be at least 1");
  require(epsilon > 0.0, "epsilon must be positive");
  require(theta > 0.0 && theta <= 1.0, "theta must lie in (0, 1]");
  require(K >= 1, "K must be at least 1");
  require(max_generations >= 1, "max_generations must be at least 1");
  require(rate_min < rate_max, "need rate_min < rate_max");
  require(train >= 1, "train must be at least 1");
  require(delta_target > 0.0 && delta_target < 1.0, "delta_target must lie in (0, 1)");
  require(n_max >= 1, "n_max must be at least 1");
  require(kappa >= 0.0 && sigma >= 0.0, "kappa and sigma must be non-negative");
  require(truth_grid >= 1, "truth_grid must be at least 1");
  require(L >= 0 && L <= 10, "L must lie in [0, 10]");
  require(N >= 0, "N must be non-negative");
  if (experiment == "sparse-dom") require(kappa > 0.0, "sparse-dom needs kappa > 0");
}

std::map<std::string, std::string> parse_config(std::istream& is, const std::string& source) {
  std::map<std::string, std::string> out;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, lineno));
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(fmt::format("{}:{}: empty key", source, lineno));
    if (!out.emplace(key, value).second) throw ConfigError(fmt::format("{}:{}: duplicate key '{}'", source, lineno, key));
  }
  return out;
}

ExperimentConfig resolve_config(const std::map<std::string, std::string>& file,
                                const std::map<std::string, std::string>& overrides) {
  std::string name;
  if (auto it = overrides.find("experiment"); it != overrides.end())
    name = it->second;
  else if (auto jt = file.find("experiment"); jt != file.end())
    name = jt->second;
  if (name.empty()) throw ConfigError("no experiment given");
  ExperimentConfig c = ExperimentConfig::defaults(name);
  for (const auto& [k, v] : file)
    if (k != "experiment") c.set(k, v);
  for (const auto& [k, v] : overrides)
    if (k != "experiment") c.set(k, v);
  c.validate();
  return c;
}

double fitted_slope(const std::vector<std::pair<double, double>>& xy, double lo, double hi) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& [x, y] : xy) {
    if (x < lo || x > hi || !(y > 0)) continue;
    const double a = std::log(x), b = std::log(y);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
    ++m;
  }
  const double den = m * sxx - sx * sx;
  if (m < 2 || den <= 0) return std::numeric_limits<double>::quiet_NaN();
  return (m * sxy - sx * sy) / den;
}

RunReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  Artifacts art(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (cfg.experiment == "cartoon-rate")
      run_cartoon(cfg, art);
    else if (cfg.experiment == "adaptive-transport")
      run_adaptive(cfg, art, false);
    else if (cfg.experiment == "isotropic-baseline")
      run_adaptive(cfg, art, true);
    else if (cfg.experiment == "rbm-example1")
      run_rbm(cfg, art, 1);
    else if (cfg.experiment == "rbm-example2")
      run_rbm(cfg, art, 2);
    else
      run_sparse_dom(cfg, art);
  } catch (const SingularSystemError& e) {
    throw NumericalFailure(fmt::format("singular system: {}", e.what()));
  } catch (const StabilizationError& e) {
    throw NumericalFailure(
        fmt::format("stabilization failed at angle {:.6f} with inf-sup {:.3e}: {}", e.angle, e.beta, e.what()));
  } catch (const SolverBreakdown& e) {
    throw NumericalFailure(fmt::format("solver breakdown at levels ({}, {}): {}", e.level_x, e.level_s, e.what()));
  }
  art.finish(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return std::move(art.report);
}

CompareReport compare_runs(const fs::path& a, const fs::path& b, double threshold) {
  const std::string ea = manifest_experiment(a), eb = manifest_experiment(b);
  if (ea != eb) throw ConfigError(fmt::format("experiments differ: '{}' vs '{}'", ea, eb));
  const auto na = csv_names(a), nb = csv_names(b);
  if (na != nb)
    throw ConfigError(fmt::format("CSV sets differ: [{}] vs [{}]", fmt::join(na, ", "), fmt::join(nb, ", ")));

  CompareReport rep;
  for (const auto& name : na) {
    const Table ta = read_csv(a / name), tb = read_csv(b / name);
    if (ta.header != tb.header) throw ConfigError(fmt::format("{}: headers differ", name));
    if (ta.rows.size() != tb.rows.size()) {
      rep.notes.push_back(fmt::format("{}: {} rows vs {}", name, ta.rows.size(), tb.rows.size()));
      rep.differs = true;
    }
    const std::size_t rows = std::min(ta.rows.size(), tb.rows.size());
    for (std::size_t c = 0; c < ta.header.size(); ++c) {
      ColumnDifference d{name, ta.header[c]};
      for (std::size_t r = 0; r < rows; ++r) {
        const std::string& x = c < ta.rows[r].size() ? ta.rows[r][c] : std::string();
        const std::string& y = c < tb.rows[r].size() ? tb.rows[r][c] : std::string();
        d.max_relative = std::max(d.max_relative, relative_difference(x, y));
      }
      d.flagged = d.max_relative > threshold;
      rep.differs |= d.flagged;
      rep.columns.push_back(d);
    }
    if (name == "picks.csv" && ta.rows != tb.rows) {
      auto seq = [](const Table& t) {
        std::vector<std::string> s;
        for (const auto& r : t.rows) s.push_back(r.size() > 1 ? r[1] : "");
        return fmt::format("{}", fmt::join(s, " "));
      };
      rep.notes.push_back("picks A: " + seq(ta));
      rep.notes.push_back("picks B: " + seq(tb));
    }
  }
  return rep;
}

void print_report(std::ostream& os, const CompareReport& r) {
  os << fmt::format("{:<16} {:<24} {:>14}\n", "file", "column", "max rel diff");
  for (const auto& c : r.columns)
    os << fmt::format("{:<16} {:<24} {:>14.3e}{}\n", c.file, c.column, c.max_relative, c.flagged ? "  FLAGGED" : "");
  for (const auto& n : r.notes) os << n << '\n';
  os << (r.differs ? "runs differ\n" : "runs agree\n");
}

}  // namespace transport::cli
